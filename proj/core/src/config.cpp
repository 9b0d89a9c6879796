#include "eretrain/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace eretrain {

namespace {

std::string trim(std::string s) {
    s.erase(0, s.find_first_not_of(" \t\r"));
    s.erase(s.find_last_not_of(" \t\r") + 1);
    return s;
}

double to_double(const std::string& v) {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (trim(v.substr(pos)).size()) throw std::invalid_argument("trailing characters in '" + v + "'");
    return d;
}

long long to_int(const std::string& v) {
    std::size_t pos = 0;
    const long long i = std::stoll(v, &pos);
    if (trim(v.substr(pos)).size()) throw std::invalid_argument("not an integer: '" + v + "'");
    return i;
}

bool to_bool(const std::string& v) {
    if (v == "true" || v == "on" || v == "1") return true;
    if (v == "false" || v == "off" || v == "0") return false;
    throw std::invalid_argument("not a boolean: '" + v + "'");
}

template <typename T>
std::vector<T> to_list(const std::string& v, char sep = ',') {
    std::vector<T> out;
    std::istringstream is(v);
    std::string item;
    while (std::getline(is, item, sep)) {
        item = trim(item);
        if (item.empty()) continue;
        if constexpr (std::is_integral_v<T>) {
            out.push_back(static_cast<T>(to_int(item)));
        } else {
            out.push_back(static_cast<T>(to_double(item)));
        }
    }
    return out;
}

// shortest text that parses back to the same double
std::string fmt(double d) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, d);
    return std::string(buf, r.ptr);
}

template <typename T>
std::string join(const std::vector<T>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
    return os.str();
}

struct Field {
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;  ///< empty string: omit
};

#define ERT_DOUBLE(key, member)                                                       \
    {key, {[](ExperimentConfig& c, const std::string& v) { c.member = to_double(v); }, \
           [](const ExperimentConfig& c) { return fmt(c.member); }}}
#define ERT_INT(key, member, type)                                                                  \
    {key, {[](ExperimentConfig& c, const std::string& v) { c.member = static_cast<type>(to_int(v)); }, \
           [](const ExperimentConfig& c) { return std::to_string(c.member); }}}
#define ERT_BOOL(key, member)                                                       \
    {key, {[](ExperimentConfig& c, const std::string& v) { c.member = to_bool(v); }, \
           [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); }}}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = {
        {"env", {[](ExperimentConfig& c, const std::string& v) { c.env = v; },
                 [](const ExperimentConfig& c) { return c.env; }}},
        {"algorithm", {[](ExperimentConfig& c, const std::string& v) { c.algorithm = v; },
                       [](const ExperimentConfig& c) { return c.algorithm; }}},
        ERT_BOOL("lagrangian", lagrangian),
        ERT_BOOL("retrain", retrain),
        {"retrain.omega", {[](ExperimentConfig& c, const std::string& v) { c.omega = to_double(v); },
                           [](const ExperimentConfig& c) { return c.omega ? fmt(*c.omega) : std::string(); }}},
        ERT_DOUBLE("retrain.beta", beta),
        ERT_INT("retrain.capacity", capacity, std::size_t),
        ERT_DOUBLE("eps.min", eps_min),
        ERT_DOUBLE("eps.decay_fraction", eps_decay_fraction),
        ERT_BOOL("eps.off", eps_off),
        ERT_INT("epochs", epochs, int),
        ERT_INT("steps_per_epoch", steps_per_epoch, std::int64_t),
        {"seeds", {[](ExperimentConfig& c, const std::string& v) { c.seeds = to_list<std::uint64_t>(v); },
                   [](const ExperimentConfig& c) { return join(c.seeds); }}},
        {"output_dir", {[](ExperimentConfig& c, const std::string& v) { c.output_dir = v; },
                        [](const ExperimentConfig& c) { return c.output_dir; }}},
        ERT_INT("eval.episodes", eval_episodes, int),
        {"net.hidden", {[](ExperimentConfig& c, const std::string& v) { c.hidden = to_list<int>(v); },
                        [](const ExperimentConfig& c) { return join(c.hidden); }}},
        ERT_DOUBLE("gamma", gamma),
        ERT_DOUBLE("lam", lam),
        ERT_DOUBLE("cost_gamma", cost_gamma),
        ERT_DOUBLE("cost_lam", cost_lam),
        ERT_DOUBLE("ppo.clip", algo.clip),
        ERT_DOUBLE("algo.target_kl", algo.target_kl),
        ERT_INT("algo.update_iterations", algo.update_iterations, int),
        ERT_INT("algo.minibatch", algo.minibatch, int),
        ERT_DOUBLE("algo.learning_rate", algo.learning_rate),
        ERT_DOUBLE("algo.max_grad_norm", algo.max_grad_norm),
        ERT_INT("trpo.cg_iterations", algo.cg_iterations, int),
        ERT_DOUBLE("trpo.cg_damping", algo.cg_damping),
        ERT_INT("trpo.backtracks", algo.line_search_backtracks, int),
        ERT_DOUBLE("trpo.backtrack_coeff", algo.backtrack_coeff),
        ERT_DOUBLE("lagr.multiplier_init", algo.lagr_multiplier_init),
        ERT_DOUBLE("lagr.lr", algo.lagr_lr),
        {"lagr.cost_limit",
         {[](ExperimentConfig& c, const std::string& v) {
              c.algo.cost_limit = to_double(v);
              c.cost_limit_set = true;
          },
          [](const ExperimentConfig& c) { return c.cost_limit_set ? fmt(c.algo.cost_limit) : std::string(); }}},
        // environments
        {"env.horizon",
         {[](ExperimentConfig& c, const std::string& v) {
              const auto h = to_int(v);
              c.gridnav.horizon = c.velcap.horizon = c.chain.horizon = h;
          },
          [](const ExperimentConfig&) { return std::string(); }}},
        {"env.penalty",
         {[](ExperimentConfig& c, const std::string& v) { c.gridnav.penalty = c.velcap.penalty = to_double(v); },
          [](const ExperimentConfig&) { return std::string(); }}},
        ERT_INT("gridnav.horizon", gridnav.horizon, std::int64_t),
        ERT_DOUBLE("gridnav.penalty", gridnav.penalty),
        ERT_DOUBLE("gridnav.threshold", gridnav.cost_threshold),
        ERT_DOUBLE("gridnav.omega", gridnav.omega),
        ERT_DOUBLE("gridnav.max_speed", gridnav.max_speed),
        ERT_DOUBLE("gridnav.lidar_range", gridnav.lidar_range),
        {"gridnav.goal",
         {[](ExperimentConfig& c, const std::string& v) {
              const auto g = to_list<double>(v, ' ');
              if (g.size() != 2) throw std::invalid_argument("gridnav.goal needs 'x y'");
              c.gridnav.goal_x = g[0];
              c.gridnav.goal_y = g[1];
          },
          [](const ExperimentConfig& c) { return fmt(c.gridnav.goal_x) + " " + fmt(c.gridnav.goal_y); }}},
        {"gridnav.obstacles",
         {[](ExperimentConfig& c, const std::string& v) {
              c.gridnav.obstacles.clear();
              std::istringstream is(v);
              std::string rect;
              while (std::getline(is, rect, ';')) {
                  if (trim(rect).empty()) continue;
                  const auto r = to_list<double>(rect, ' ');
                  if (r.size() != 4 || r[0] >= r[2] || r[1] >= r[3]) {
                      throw std::invalid_argument("obstacle needs 'x0 y0 x1 y1' with x0<x1, y0<y1");
                  }
                  c.gridnav.obstacles.push_back({r[0], r[1], r[2], r[3]});
              }
          },
          [](const ExperimentConfig& c) {
              std::string s;
              for (const auto& o : c.gridnav.obstacles) {
                  if (!s.empty()) s += "; ";
                  s += fmt(o.x0) + " " + fmt(o.y0) + " " + fmt(o.x1) + " " + fmt(o.y1);
              }
              return s;
          }}},
        ERT_INT("velcap.horizon", velcap.horizon, std::int64_t),
        ERT_DOUBLE("velcap.penalty", velcap.penalty),
        ERT_DOUBLE("velcap.threshold", velcap.cost_threshold),
        ERT_DOUBLE("velcap.omega", velcap.omega),
        ERT_DOUBLE("velcap.v_max", velcap.v_max),
        ERT_DOUBLE("velcap.v_limit", velcap.v_limit),
        ERT_DOUBLE("velcap.start_speed", velcap.start_speed),
        ERT_INT("chain.horizon", chain.horizon, std::int64_t),
        ERT_INT("chain.states", chain.states, std::size_t),
        ERT_DOUBLE("chain.slip", chain.slip),
    };
    return table;
}

#undef ERT_DOUBLE
#undef ERT_INT
#undef ERT_BOOL

}  // namespace

void ExperimentConfig::validate() const {
    if (env != "gridnav" && env != "velcap" && env != "chain") {
        throw std::invalid_argument("env must be gridnav, velcap or chain");
    }
    if (algorithm != "ppo" && algorithm != "trpo") throw std::invalid_argument("algorithm must be ppo or trpo");
    if (env == "chain" && lagrangian) throw std::invalid_argument("chain has no cost channel for a Lagrangian");
    if (omega && !(*omega >= 0.0)) throw std::invalid_argument("retrain.omega must be non-negative");
    if (!(beta >= 0.0)) throw std::invalid_argument("retrain.beta must be non-negative");
    if (capacity == 0) throw std::invalid_argument("retrain.capacity must be positive");
    if (!(eps_min >= 0.0 && eps_min <= 1.0)) throw std::invalid_argument("eps.min must lie in [0, 1]");
    if (!(eps_decay_fraction > 0.0 && eps_decay_fraction <= 1.0)) {
        throw std::invalid_argument("eps.decay_fraction must lie in (0, 1]");
    }
    if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
    if (steps_per_epoch <= 0) throw std::invalid_argument("steps_per_epoch must be positive");
    if (seeds.empty()) throw std::invalid_argument("seeds must list at least one seed");
    if (eval_episodes < 0) throw std::invalid_argument("eval.episodes must be non-negative");
    if (hidden.empty()) throw std::invalid_argument("net.hidden needs at least one layer");
    for (int h : hidden) {
        if (h <= 0) throw std::invalid_argument("net.hidden sizes must be positive");
    }
    for (double g : {gamma, lam, cost_gamma, cost_lam}) {
        if (!(g >= 0.0 && g <= 1.0)) throw std::invalid_argument("discount and GAE factors must lie in [0, 1]");
    }
    if (gamma >= 1.0) throw std::invalid_argument("gamma must be below 1");
    AlgoConfig a = algo;
    a.cost_limit = effective_cost_limit();
    a.validate();
    if (gridnav.horizon <= 0 || velcap.horizon <= 0 || chain.horizon <= 0) {
        throw std::invalid_argument("horizons must be positive");
    }
    if (gridnav.penalty < 0.0 || velcap.penalty < 0.0) throw std::invalid_argument("penalties must be non-negative");
    if (!(velcap.v_max > 0.0 && velcap.v_max < velcap.v_limit)) {
        throw std::invalid_argument("velcap.v_max must lie in (0, v_limit)");
    }
}

double ExperimentConfig::effective_omega() const {
    if (omega) return *omega;
    if (env == "gridnav") return gridnav.omega;
    if (env == "velcap") return velcap.omega;
    return 0.0;
}

double ExperimentConfig::effective_cost_limit() const {
    if (cost_limit_set) return algo.cost_limit;
    if (env == "gridnav") return gridnav.cost_threshold;
    if (env == "velcap") return velcap.cost_threshold;
    return algo.cost_limit;
}

ExperimentConfig parse_config(std::istream& is) {
    ExperimentConfig c;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("config line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = fields().find(key);
        if (it == fields().end()) {
            throw std::runtime_error("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
        try {
            it->second.set(c, value);
        } catch (const std::exception& e) {
            throw std::runtime_error("config line " + std::to_string(lineno) + " (" + key + "): " + e.what());
        }
    }
    try {
        c.validate();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("invalid config: ") + e.what());
    }
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path.string());
    return parse_config(in);
}

std::string write_config(const ExperimentConfig& c) {
    std::ostringstream os;
    for (const auto& [key, field] : fields()) {
        const std::string v = field.get(c);
        if (!v.empty()) os << key << " = " << v << '\n';
    }
    return os.str();
}

std::unique_ptr<Env> make_env(const ExperimentConfig& c) {
    if (c.env == "gridnav") return std::make_unique<GridNav>(c.gridnav);
    if (c.env == "velcap") return std::make_unique<VelCap>(c.velcap);
    if (c.env == "chain") return std::make_unique<ChainEnv>(c.chain);
    throw std::invalid_argument("unknown env '" + c.env + "'");
}

}  // namespace eretrain
