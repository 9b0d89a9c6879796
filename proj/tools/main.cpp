#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <malloc.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "eretrain/bound.hpp"
#include "eretrain/config.hpp"
#include "eretrain/experiment.hpp"
#include "eretrain/retrain.hpp"
#include "eretrain/rollout.hpp"
#include "eretrain/verify.hpp"

namespace fs = std::filesystem;
using namespace eretrain;

namespace {

constexpr const char* kOutputRootVar = "ERETRAIN_OUTPUT_ROOT";

int cmd_train(const std::string& config_path, std::uint64_t seed, const std::string& out_root) {
    const ExperimentConfig c = load_config(config_path);
    fs::path root = c.output_dir;
    if (const char* env_root = std::getenv(kOutputRootVar); env_root && *env_root) root = env_root;
    if (!out_root.empty()) root = out_root;
    const fs::path dir = root / run_name(c, seed);
    std::printf("training %s for %d epochs -> %s\n", run_name(c, seed).c_str(), c.epochs, dir.string().c_str());
    const RunResult r = run_experiment(c, seed, dir);
    if (!r.rows.empty()) {
        const MetricsRow& last = r.rows.back();
        std::printf("epoch %d  return %.4f  cost %.4f  eps %.3f  areas %zu  lambda %.4f\n", last.epoch,
                    last.avg_return, last.avg_episode_cost, last.epsilon, last.buffer_size, last.lambda);
    }
    if (r.aborted) {
        std::fprintf(stderr, "error: %s\n", r.message.c_str());
        return 2;
    }
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint, int episodes, std::uint64_t seed,
             bool deterministic) {
    const ExperimentConfig c = load_config(config_path);
    auto env = make_env(c);
    env->seed(Rng::stream(seed, "env-noise").next());
    env->set_reward_penalty_enabled(!c.lagrangian);
    const Policy policy = load_checkpoint_policy(checkpoint);
    if (policy.obs_dim() != static_cast<int>(env->spec().obs_dim)) {
        throw std::runtime_error("checkpoint observation size does not match env " + c.env);
    }
    Rng rng = Rng::stream(seed, "eval");
    const CostStats s = evaluate_episodes(*env, policy, episodes, rng, deterministic);
    std::printf("episodes %zu  avg_return %.6f  avg_episode_cost %.6f  threshold %.3f\n", s.episodes, s.avg_return,
                s.avg_episode_cost, c.effective_cost_limit());
    return 0;
}

int cmd_verify(const std::string& checkpoint, const std::string& areas_path, const std::string& post_path,
               const std::string& json_out) {
    const Policy policy = load_checkpoint_policy(checkpoint);
    std::ifstream areas_in(areas_path);
    if (!areas_in) throw std::runtime_error("cannot open " + areas_path);
    const AreaBuffer buffer = AreaBuffer::load(areas_in, 1u << 30);
    std::ifstream post_in(post_path);
    if (!post_in) throw std::runtime_error("cannot open " + post_path);
    const Postcondition post = parse_postcondition(post_in);

    nlohmann::json report = nlohmann::json::array();
    std::printf("%5s %8s %10s %10s %10s %9s\n", "area", "hits", "safe", "violating", "unknown", "regions");
    double vol_total = 0.0, vol_violating = 0.0;
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        const RetrainArea& a = buffer.areas()[i];
        VerifTask task{policy.net(), a.box, post.constraints, post.min_width, post.max_regions};
        const VerifReport r = quantify_violation(task);
        std::printf("%5zu %8lld %10.4f %10.4f %10.4f %9zu%s\n", i, static_cast<long long>(a.hits), r.safe_fraction,
                    r.violating_fraction, r.unknown_fraction, r.regions_explored,
                    r.budget_exhausted ? "  (budget)" : "");
        nlohmann::json j = to_json(r);
        j["area"] = i;
        j["box"] = to_json(a.box);
        report.push_back(j);
        vol_total += 1.0;
        vol_violating += r.violating_fraction;
    }
    if (buffer.size()) {
        std::printf("mean violating fraction over %zu areas: %.4f\n", buffer.size(), vol_violating / vol_total);
    }
    if (!json_out.empty()) {
        std::ofstream out(json_out);
        if (!out) throw std::runtime_error("cannot write " + json_out);
        out << report.dump(2) << '\n';
    } else {
        std::cout << report.dump() << '\n';
    }
    return 0;
}

int cmd_bound(double alpha, double gamma, double k, double k_prime, double eps) {
    const double mixed = mixed_bound({alpha, gamma, k, k_prime, eps});
    const double classic = classic_bound(alpha, gamma, k);
    std::printf("mixed_bound %.12g\nclassic_bound %.12g\n", mixed, classic);
    return 0;
}

int cmd_pareto(const std::vector<std::string>& files, const std::string& out_path) {
    std::vector<fs::path> paths(files.begin(), files.end());
    const ParetoResult r = pareto_export(paths);
    if (out_path.empty()) {
        write_pareto_csv(r, std::cout);
    } else {
        std::ofstream out(out_path);
        if (!out) throw std::runtime_error("cannot write " + out_path);
        write_pareto_csv(r, out);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    // batch-sized buffers stay on the heap
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);

    CLI::App app{"epsilon-retrain reinforcement learning lab"};
    app.require_subcommand(1);

    std::string config_path, out_root;
    std::uint64_t seed = 0;
    auto* train = app.add_subcommand("train", "train one seed and write metrics, areas and checkpoint");
    train->add_option("--config", config_path, "experiment config file")->required()->check(CLI::ExistingFile);
    train->add_option("--seed", seed, "root seed")->required();
    train->add_option("--out", out_root, std::string("output root (overrides ") + kOutputRootVar + ")");

    std::string checkpoint;
    int episodes = 10;
    bool deterministic = false;
    auto* eval = app.add_subcommand("eval", "run a checkpointed policy from uniform starts");
    eval->add_option("--config", config_path, "experiment config file")->required()->check(CLI::ExistingFile);
    eval->add_option("--checkpoint", checkpoint, "checkpoint.json")->required()->check(CLI::ExistingFile);
    eval->add_option("--episodes", episodes, "number of episodes")->check(CLI::PositiveNumber);
    eval->add_option("--seed", seed, "root seed");
    eval->add_flag("--deterministic", deterministic, "act with the distribution mode");

    std::string areas_path, post_path, json_out;
    auto* verify = app.add_subcommand("verify", "quantify postcondition violations over retrain areas");
    verify->add_option("--checkpoint", checkpoint, "checkpoint.json")->required()->check(CLI::ExistingFile);
    verify->add_option("--areas", areas_path, "areas.jsonl")->required()->check(CLI::ExistingFile);
    verify->add_option("--postcondition", post_path, "postcondition file")->required()->check(CLI::ExistingFile);
    verify->add_option("--json", json_out, "write the JSON report here instead of stdout");

    double alpha = 0.0, gamma = 0.99, k = 0.0, k_prime = 0.0, eps = 0.0;
    auto* bound = app.add_subcommand("bound", "evaluate the mixed-restart surrogate bound");
    bound->add_option("--alpha", alpha)->required();
    bound->add_option("--gamma", gamma);
    bound->add_option("--k", k)->required();
    bound->add_option("--k-prime", k_prime)->required();
    bound->add_option("--eps", eps)->required();

    std::vector<std::string> files;
    std::string pareto_out;
    auto* pareto = app.add_subcommand("pareto", "converged (return, cost) points from metrics files");
    pareto->add_option("files", files, "metrics.csv files")->required();
    pareto->add_option("--out", pareto_out, "write CSV here instead of stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(config_path, seed, out_root);
        if (*eval) return cmd_eval(config_path, checkpoint, episodes, seed, deterministic);
        if (*verify) return cmd_verify(checkpoint, areas_path, post_path, json_out);
        if (*bound) return cmd_bound(alpha, gamma, k, k_prime, eps);
        if (*pareto) return cmd_pareto(files, pareto_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
