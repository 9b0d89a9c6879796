#include "eretrain/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "eretrain/algo.hpp"
#include "eretrain/bound.hpp"
#include "eretrain/rollout.hpp"

namespace eretrain {

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

bool finite_row(const MetricsRow& r) {
    for (double v : {r.avg_return, r.avg_episode_cost, r.violation_step_fraction, r.epsilon, r.lambda, r.kl, r.k,
                     r.k_prime, r.bound_value, r.eval_return, r.eval_cost, r.eval_violation_fraction}) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << s;
}

struct Learner {
    Policy policy;
    Mlp value;
    Mlp cost_value;
    double lambda = 0.0;
};

void write_checkpoint(const std::filesystem::path& p, const ExperimentConfig& c, const Learner& l, int epoch) {
    nlohmann::json j;
    j["format"] = "eretrain-checkpoint-1";
    j["env"] = c.env;
    j["epoch"] = epoch;
    j["policy"] = to_json(l.policy);
    j["value"] = to_json(l.value);
    j["cost_value"] = c.lagrangian ? to_json(l.cost_value) : nlohmann::json(nullptr);
    j["lambda"] = l.lambda;
    write_text(p, j.dump(1) + "\n");
}

void write_areas(const std::filesystem::path& p, const AreaBuffer& buffer) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    buffer.dump(out);
}

std::string strip_seed_suffix(const std::string& name) {
    const auto pos = name.rfind("-s");
    if (pos == std::string::npos || pos + 2 == name.size()) return name;
    for (std::size_t i = pos + 2; i < name.size(); ++i) {
        if (name[i] < '0' || name[i] > '9') return name;
    }
    return name.substr(0, pos);
}

}  // namespace

const std::vector<std::string>& metrics_columns() {
    static const std::vector<std::string> cols = {
        "epoch", "env_steps", "avg_return", "avg_episode_cost", "violation_step_fraction", "epsilon",
        "buffer_size", "lambda", "kl", "k", "k_prime", "bound_value", "eval_return", "eval_cost",
        "eval_violation_fraction", "uniform_cost", "uniform_violation_fraction"};
    return cols;
}

std::string metrics_header() {
    std::string h;
    for (const auto& c : metrics_columns()) h += (h.empty() ? "" : ",") + c;
    return h;
}

std::string format_metrics_row(const MetricsRow& r) {
    std::ostringstream os;
    os << r.epoch << ',' << r.env_steps << ',' << num(r.avg_return) << ',' << num(r.avg_episode_cost) << ','
       << num(r.violation_step_fraction) << ',' << num(r.epsilon) << ',' << r.buffer_size << ',' << num(r.lambda)
       << ',' << num(r.kl) << ',' << num(r.k) << ',' << num(r.k_prime) << ',' << num(r.bound_value) << ','
       << num(r.eval_return) << ',' << num(r.eval_cost) << ',' << num(r.eval_violation_fraction) << ','
       << num(r.uniform_cost) << ',' << num(r.uniform_violation_fraction);
    return os.str();
}

std::vector<MetricsRow> read_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path.string() + ": cannot open");
    std::string line;
    if (!std::getline(in, line) || line != metrics_header()) {
        throw std::runtime_error(path.string() + ": missing or unexpected metrics header");
    }
    std::vector<MetricsRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> v;
        std::istringstream is(line);
        std::string cell;
        try {
            while (std::getline(is, cell, ',')) {
                std::size_t pos = 0;
                v.push_back(std::stod(cell, &pos));
                if (pos != cell.size()) throw std::invalid_argument(cell);
            }
        } catch (const std::exception&) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": non-numeric cell");
        }
        if (v.size() != metrics_columns().size()) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                                     std::to_string(metrics_columns().size()) + " cells");
        }
        MetricsRow r;
        r.epoch = static_cast<int>(v[0]);
        r.env_steps = static_cast<std::int64_t>(v[1]);
        r.avg_return = v[2];
        r.avg_episode_cost = v[3];
        r.violation_step_fraction = v[4];
        r.epsilon = v[5];
        r.buffer_size = static_cast<std::size_t>(v[6]);
        r.lambda = v[7];
        r.kl = v[8];
        r.k = v[9];
        r.k_prime = v[10];
        r.bound_value = v[11];
        r.eval_return = v[12];
        r.eval_cost = v[13];
        r.eval_violation_fraction = v[14];
        r.uniform_cost = v[15];
        r.uniform_violation_fraction = v[16];
        rows.push_back(r);
    }
    return rows;
}

std::string method_name(const ExperimentConfig& c) {
    std::string m = c.env + "-" + c.algorithm;
    if (c.lagrangian) m += "-lagr";
    if (c.retrain) m += "-eps";
    return m;
}

std::string run_name(const ExperimentConfig& c, std::uint64_t seed) {
    return method_name(c) + "-s" + std::to_string(seed);
}

RunResult run_experiment(const ExperimentConfig& c, std::uint64_t seed, const std::filesystem::path& dir) {
    c.validate();
    std::filesystem::create_directories(dir);
    RunResult result;
    result.dir = dir;

    auto env = make_env(c);
    env->seed(Rng::stream(seed, "env-noise").next());
    env->set_reward_penalty_enabled(!c.lagrangian);
    const EnvSpec& spec = env->spec();
    auto eval_env = env->clone();
    eval_env->seed(Rng::stream(seed, "eval-noise").next());

    const int obs_dim = static_cast<int>(spec.obs_dim);
    const bool discrete = spec.action_kind == ActionKind::kDiscrete;
    Learner l;
    {
        Rng init = Rng::stream(seed, "policy-init");
        l.policy = Policy::init(discrete ? PolicyKind::kCategorical : PolicyKind::kGaussian, obs_dim,
                                static_cast<int>(spec.act_dim), c.hidden, init);
        std::vector<int> sizes{obs_dim};
        sizes.insert(sizes.end(), c.hidden.begin(), c.hidden.end());
        sizes.push_back(1);
        Rng vinit = Rng::stream(seed, "value-init");
        l.value = Mlp::init(sizes, vinit);
        Rng cinit = Rng::stream(seed, "cost-value-init");
        l.cost_value = Mlp::init(sizes, cinit);
    }
    l.lambda = c.lagrangian ? c.algo.lagr_multiplier_init : 0.0;

    AlgoConfig algo = c.algo;
    algo.cost_limit = c.effective_cost_limit();
    const double limit = algo.cost_limit;

    write_text(dir / "config.txt", write_config(c));
    std::ofstream metrics(dir / "metrics.csv", std::ios::binary);
    if (!metrics) throw std::runtime_error("cannot write " + (dir / "metrics.csv").string());
    metrics << metrics_header() << '\n';

    AreaBuffer buffer(c.capacity);
    const std::int64_t total_steps = static_cast<std::int64_t>(c.epochs) * c.steps_per_epoch;
    const EpsSchedule schedule =
        c.retrain && !c.eps_off && total_steps > 0 ? EpsSchedule(c.eps_min, c.eps_decay_fraction, total_steps) : EpsSchedule::off();

    RolloutConfig rc;
    rc.steps_per_epoch = c.steps_per_epoch;
    rc.omega = c.effective_omega();
    rc.beta = c.beta;
    rc.restarts = c.retrain;
    rc.gamma = c.gamma;
    rc.lam = c.lam;
    rc.cost_gamma = c.cost_gamma;
    rc.cost_lam = c.cost_lam;
    Collector collector(*env, buffer, rc, Rng::stream(seed, "collector").next());

    Adam pi_opt(l.policy.num_params(), algo.learning_rate);
    Adam v_opt(l.value.num_params(), algo.learning_rate);
    Adam c_opt(l.cost_value.num_params(), algo.learning_rate);
    Rng update_rng = Rng::stream(seed, "update");
    Rng eval_rng = Rng::stream(seed, "eval");
    ViolationTracker train_tracker(limit);
    ViolationTracker eval_tracker(limit);
    ViolationTracker uniform_tracker(limit);
    constexpr RestartSource kUniformStart = RestartSource::kUniform;

    int epoch = 0;
    try {
        for (epoch = 0; epoch < c.epochs; ++epoch) {
            const double eps = schedule.at(collector.global_step());
            TrajectoryBatch batch =
                collector.collect_epoch(l.policy, l.value, c.lagrangian ? &l.cost_value : nullptr, schedule);
            const CostStats stats = cost_stats(batch);

            // The multiplier sees this epoch's cost before the policy moves.
            if (c.lagrangian) l.lambda = lagrangian_step({l.lambda}, stats.avg_episode_cost, limit, algo.lagr_lr).lambda;

            UpdateBatch ub{batch.obs, batch.actions, batch.log_prob_old,
                           c.lagrangian ? penalized_advantage(batch.adv, batch.cost_adv, l.lambda) : batch.adv};
            const UpdateDiagnostics diag = c.algorithm == "trpo" ? trpo_update(l.policy, ub, algo)
                                                                 : ppo_update(l.policy, pi_opt, ub, algo, update_rng);
            value_update(l.value, v_opt, batch.obs, batch.returns, algo, update_rng);
            if (c.lagrangian) value_update(l.cost_value, c_opt, batch.obs, batch.cost_returns, algo, update_rng);
            if (!l.policy.flat().allFinite() || !std::isfinite(diag.loss)) {
                throw std::runtime_error("policy update produced a non-finite value");
            }

            MetricsRow row;
            row.epoch = epoch;
            row.env_steps = collector.global_step();
            row.avg_return = stats.avg_return;
            row.avg_episode_cost = stats.avg_episode_cost;
            row.violation_step_fraction = train_tracker.update(stats.avg_episode_cost);
            const CostStats uniform = cost_stats(batch, &kUniformStart);
            row.uniform_cost = uniform.avg_episode_cost;
            row.uniform_violation_fraction = uniform_tracker.update(uniform.avg_episode_cost);
            row.epsilon = eps;
            row.buffer_size = buffer.size();
            row.lambda = l.lambda;
            row.kl = diag.final_kl;
            const KSplit ks = estimate_k_split(batch);
            row.k = ks.k;
            row.k_prime = ks.k_prime;
            // Pinsker: total variation <= sqrt(KL / 2) bounds the coupling alpha.
            const double alpha = std::min(1.0, std::sqrt(std::max(0.0, diag.max_kl) / 2.0));
            row.bound_value = mixed_bound({alpha, c.gamma, ks.k, ks.k_prime, eps});
            if (c.eval_episodes > 0) {
                const CostStats ev = evaluate_episodes(*eval_env, l.policy, c.eval_episodes, eval_rng);
                row.eval_return = ev.avg_return;
                row.eval_cost = ev.avg_episode_cost;
                row.eval_violation_fraction = eval_tracker.update(ev.avg_episode_cost);
            }
            if (!finite_row(row)) throw std::runtime_error("non-finite metric at epoch " + std::to_string(epoch));
            metrics << format_metrics_row(row) << '\n';
            metrics.flush();
            result.rows.push_back(row);
        }
    } catch (const std::runtime_error& e) {
        result.aborted = true;
        result.message = std::string("aborted at epoch ") + std::to_string(epoch) + ": " + e.what();
    }

    write_areas(dir / "areas.jsonl", buffer);
    write_checkpoint(dir / "checkpoint.json", c, l, static_cast<int>(result.rows.size()));
    return result;
}

Policy load_checkpoint_policy(const std::filesystem::path& checkpoint) {
    std::ifstream in(checkpoint);
    if (!in) throw std::runtime_error("cannot open " + checkpoint.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(checkpoint.string() + ": " + e.what());
    }
    if (!j.contains("policy")) throw std::runtime_error(checkpoint.string() + ": no policy entry");
    return policy_from_json(j.at("policy"));
}

ParetoResult pareto_export(const std::vector<std::filesystem::path>& metrics_files) {
    if (metrics_files.empty()) throw std::invalid_argument("pareto_export needs at least one metrics file");
    ParetoResult out;
    std::map<std::string, ParetoPoint> groups;
    std::vector<std::string> order;
    for (const auto& f : metrics_files) {
        const auto rows = read_metrics(f);
        if (rows.empty()) throw std::runtime_error(f.string() + ": no epochs recorded");
        const std::size_t tail = std::max<std::size_t>(1, (rows.size() + 9) / 10);
        ParetoPoint p;
        p.label = f.string();
        for (std::size_t i = rows.size() - tail; i < rows.size(); ++i) {
            p.avg_return += rows[i].avg_return;
            p.avg_cost += rows[i].avg_episode_cost;
        }
        p.avg_return /= static_cast<double>(tail);
        p.avg_cost /= static_cast<double>(tail);
        out.runs.push_back(p);

        const auto parent = f.parent_path().filename().string();
        const std::string method = parent.empty() ? f.stem().string() : strip_seed_suffix(parent);
        auto [it, fresh] = groups.try_emplace(method, ParetoPoint{method, 0.0, 0.0, 0});
        if (fresh) order.push_back(method);
        it->second.avg_return += p.avg_return;
        it->second.avg_cost += p.avg_cost;
        ++it->second.runs;
    }
    for (const auto& m : order) {
        ParetoPoint p = groups[m];
        p.avg_return /= static_cast<double>(p.runs);
        p.avg_cost /= static_cast<double>(p.runs);
        out.methods.push_back(p);
    }
    return out;
}

void write_pareto_csv(const ParetoResult& r, std::ostream& os) {
    os << "kind,label,runs,avg_return,avg_cost\n";
    for (const auto& p : r.runs) os << "run," << p.label << ',' << p.runs << ',' << num(p.avg_return) << ',' << num(p.avg_cost) << '\n';
    for (const auto& p : r.methods) {
        os << "method," << p.label << ',' << p.runs << ',' << num(p.avg_return) << ',' << num(p.avg_cost) << '\n';
    }
}

}  // namespace eretrain
