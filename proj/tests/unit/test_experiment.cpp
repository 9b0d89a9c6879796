#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "eretrain/experiment.hpp"
#include "eretrain/retrain.hpp"
#include "oracles.hpp"

using namespace eretrain;
namespace fs = std::filesystem;

namespace {

fs::path scratch_root() { return fs::temp_directory_path() / ("eretrain-test-" + std::to_string(::getpid())); }

struct ScratchCleanup : ::testing::Environment {
    void TearDown() override { fs::remove_all(scratch_root()); }
};
const auto* const kCleanup = ::testing::AddGlobalTestEnvironment(new ScratchCleanup);

fs::path scratch(const std::string& name) {
    const fs::path p = scratch_root() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
}

ExperimentConfig tiny(const std::string& env = "gridnav") {
    ExperimentConfig c;
    c.env = env;
    c.epochs = 3;
    c.steps_per_epoch = 300;
    c.hidden = {16};
    c.eval_episodes = 1;
    c.gridnav.horizon = 100;
    c.velcap.horizon = 60;
    c.algo.minibatch = 64;
    c.algo.update_iterations = 3;
    return c;
}

struct Cli {
    int status;
    std::string out;
};

Cli run_cli(const std::string& args, const fs::path& work) {
    const fs::path out = work / "cli-out.txt";
    const std::string cmd = std::string("\"") + ERETRAIN_CLI + "\" " + args + " > \"" + out.string() + "\" 2>&1";
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out)};
}

std::string metrics_text(const std::vector<std::pair<double, double>>& return_cost) {
    std::string s = metrics_header() + "\n";
    int e = 0;
    for (const auto& [r, c] : return_cost) {
        MetricsRow row;
        row.epoch = e++;
        row.avg_return = r;
        row.avg_episode_cost = c;
        s += format_metrics_row(row) + "\n";
    }
    return s;
}

}  // namespace

TEST(Metrics, HeaderListsEveryColumn) {
    const std::string h = metrics_header();
    for (const char* col : {"epoch", "env_steps", "avg_return", "avg_episode_cost", "violation_step_fraction",
                            "epsilon", "buffer_size", "lambda", "kl", "k", "k_prime", "bound_value"}) {
        EXPECT_NE(h.find(col), std::string::npos) << col;
    }
    EXPECT_EQ(h.rfind("epoch,", 0), 0u);
}

TEST(Metrics, RowRoundTrip) {
    const fs::path dir = scratch("roundtrip");
    MetricsRow r;
    r.epoch = 4;
    r.env_steps = 1200;
    r.avg_return = -1.25;
    r.avg_episode_cost = 3.5;
    r.lambda = 0.176;
    r.bound_value = 5.4;
    spit(dir / "m.csv", metrics_header() + "\n" + format_metrics_row(r) + "\n");
    const auto rows = read_metrics(dir / "m.csv");
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].env_steps, 1200);
    EXPECT_EQ(rows[0].avg_return, -1.25);
    EXPECT_EQ(rows[0].lambda, 0.176);
    EXPECT_EQ(rows[0].bound_value, 5.4);
}

TEST(Metrics, MalformedFileIsNamed) {
    const fs::path dir = scratch("malformed");
    spit(dir / "bad.csv", metrics_header() + "\n0,1,2\n");
    spit(dir / "header.csv", "a,b,c\n");
    spit(dir / "nan.csv", metrics_text({{1.0, 2.0}}) + "1,0,x,0,0,0,0,0,0,0,0,0,0,0,0\n");
    for (const char* f : {"bad.csv", "header.csv", "nan.csv", "missing.csv"}) {
        try {
            read_metrics(dir / f);
            ADD_FAILURE() << f << " accepted";
        } catch (const std::runtime_error& e) {
            EXPECT_NE(std::string(e.what()).find(f), std::string::npos) << e.what();
        }
    }
}

TEST(RunExperiment, ZeroEpochsWritesHeaderAndInitialCheckpoint) {
    const fs::path dir = scratch("zero");
    ExperimentConfig c = tiny();
    c.epochs = 0;
    const RunResult r = run_experiment(c, 1, dir);
    EXPECT_FALSE(r.aborted);
    EXPECT_TRUE(r.rows.empty());
    EXPECT_EQ(slurp(dir / "metrics.csv"), metrics_header() + "\n");
    EXPECT_EQ(slurp(dir / "areas.jsonl"), "");
    const Policy p = load_checkpoint_policy(dir / "checkpoint.json");
    EXPECT_EQ(p.obs_dim(), 10);
    EXPECT_EQ(load_config(dir / "config.txt").epochs, 0);
}

TEST(RunExperiment, OneRowPerEpochWithFiniteValues) {
    const fs::path dir = scratch("rows");
    ExperimentConfig c = tiny("velcap");
    c.lagrangian = true;
    const RunResult r = run_experiment(c, 2, dir);
    ASSERT_FALSE(r.aborted) << r.message;
    const auto rows = read_metrics(dir / "metrics.csv");
    ASSERT_EQ(rows.size(), 3u);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i].epoch, static_cast<int>(i));
        EXPECT_EQ(rows[i].env_steps, static_cast<std::int64_t>(300 * (i + 1)));
        EXPECT_GE(rows[i].lambda, 0.0);
        EXPECT_GE(rows[i].bound_value, 0.0);
        EXPECT_GE(rows[i].violation_step_fraction, 0.0);
        EXPECT_LE(rows[i].violation_step_fraction, 1.0);
    }
    EXPECT_EQ(rows[0].epsilon, 1.0);
    EXPECT_LT(rows[2].epsilon, 1.0);
}

TEST(RunExperiment, IsByteIdenticalForFixedSeed) {
    const fs::path a = scratch("det-a"), b = scratch("det-b");
    ExperimentConfig c = tiny();
    c.algorithm = "trpo";
    run_experiment(c, 7, a);
    run_experiment(c, 7, b);
    for (const char* f : {"metrics.csv", "areas.jsonl", "checkpoint.json", "config.txt"}) {
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    EXPECT_FALSE(slurp(a / "areas.jsonl").empty());

    const fs::path other = scratch("det-other");
    run_experiment(c, 8, other);
    EXPECT_NE(slurp(a / "metrics.csv"), slurp(other / "metrics.csv"));
}

TEST(RunExperiment, ZeroEpsilonMatchesRetrainOff) {
    const fs::path on = scratch("eps0"), off = scratch("off");
    ExperimentConfig c = tiny();
    c.eps_off = true;
    run_experiment(c, 3, on);
    c.eps_off = false;
    c.retrain = false;
    run_experiment(c, 3, off);
    EXPECT_EQ(slurp(on / "metrics.csv"), slurp(off / "metrics.csv"));
    EXPECT_EQ(slurp(on / "checkpoint.json"), slurp(off / "checkpoint.json"));
}

TEST(RunExperiment, RestartsChangeTheRun) {
    const fs::path on = scratch("restart-on"), off = scratch("restart-off");
    ExperimentConfig c = tiny();
    run_experiment(c, 3, on);
    c.retrain = false;
    run_experiment(c, 3, off);
    EXPECT_NE(slurp(on / "metrics.csv"), slurp(off / "metrics.csv"));
}

TEST(RunExperiment, AbortKeepsPartialArtifacts) {
    const fs::path dir = scratch("abort");
    ExperimentConfig c = tiny();
    c.algo.learning_rate = 1e300;  // the first Adam step overflows the parameters
    const RunResult r = run_experiment(c, 4, dir);
    EXPECT_TRUE(r.aborted);
    EXPECT_NE(r.message.find("aborted"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "metrics.csv"));
    EXPECT_TRUE(fs::exists(dir / "checkpoint.json"));
    EXPECT_EQ(read_metrics(dir / "metrics.csv").size(), r.rows.size());
}

TEST(RunExperiment, ChainPolicyImproves) {
    int improved = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const fs::path dir = scratch("chain" + std::to_string(seed));
        ExperimentConfig c = tiny("chain");
        c.retrain = false;
        c.epochs = 0;
        run_experiment(c, seed, dir);
        const Policy before = load_checkpoint_policy(dir / "checkpoint.json");
        c.epochs = 20;
        c.steps_per_epoch = 600;
        run_experiment(c, seed, dir);
        const Policy after = load_checkpoint_policy(dir / "checkpoint.json");
        const ChainEnv env(c.chain);
        const auto value = [&](const Policy& p) {
            return oracle::chain_start_mean(
                oracle::chain_policy_value(env, oracle::chain_p_right(p, c.chain.states), c.chain.horizon));
        };
        if (value(after) > value(before)) ++improved;
    }
    EXPECT_GE(improved, 4);
}

TEST(RunNames, EncodeMethodAndSeed) {
    ExperimentConfig c;
    c.lagrangian = true;
    EXPECT_EQ(run_name(c, 3), "gridnav-ppo-lagr-eps-s3");
    EXPECT_EQ(method_name(c), "gridnav-ppo-lagr-eps");
    c.retrain = false;
    c.algorithm = "trpo";
    c.lagrangian = false;
    EXPECT_EQ(run_name(c, 0), "gridnav-trpo-s0");
}

TEST(Pareto, ConstantRunGivesThatPoint) {
    const fs::path dir = scratch("pareto-const");
    spit(dir / "m-s0" / "metrics.csv", metrics_text(std::vector<std::pair<double, double>>(20, {2.5, 0.75})));
    const ParetoResult r = pareto_export({dir / "m-s0" / "metrics.csv"});
    ASSERT_EQ(r.runs.size(), 1u);
    EXPECT_EQ(r.runs[0].avg_return, 2.5);
    EXPECT_EQ(r.runs[0].avg_cost, 0.75);
    ASSERT_EQ(r.methods.size(), 1u);
    EXPECT_EQ(r.methods[0].label, "m");
}

TEST(Pareto, TwoRunsAndTheirMean) {
    const fs::path dir = scratch("pareto-two");
    spit(dir / "m-s0" / "metrics.csv", metrics_text({{1.0, 4.0}}));
    spit(dir / "m-s1" / "metrics.csv", metrics_text({{3.0, 2.0}}));
    const ParetoResult r = pareto_export({dir / "m-s0" / "metrics.csv", dir / "m-s1" / "metrics.csv"});
    ASSERT_EQ(r.runs.size(), 2u);
    ASSERT_EQ(r.methods.size(), 1u);
    EXPECT_EQ(r.methods[0].runs, 2u);
    EXPECT_EQ(r.methods[0].avg_return, 2.0);
    EXPECT_EQ(r.methods[0].avg_cost, 3.0);
}

TEST(Pareto, TailMeansMatchHandComputation) {
    const fs::path dir = scratch("pareto-tail");
    // 20 epochs: the last 10% is epochs 18 and 19
    std::vector<std::pair<double, double>> a;
    for (int e = 0; e < 20; ++e) a.push_back({static_cast<double>(e), 100.0 - e});
    spit(dir / "a-s0" / "metrics.csv", metrics_text(a));
    // 11 epochs: ceil(1.1) = 2 rows, epochs 9 and 10
    std::vector<std::pair<double, double>> b;
    for (int e = 0; e < 11; ++e) b.push_back({e * 0.5, e * 0.25});
    spit(dir / "b-s0" / "metrics.csv", metrics_text(b));
    // 3 epochs: at least one row, the last
    spit(dir / "b-s1" / "metrics.csv", metrics_text({{9.0, 9.0}, {9.0, 9.0}, {-1.0, 7.0}}));

    const ParetoResult r = pareto_export(
        {dir / "a-s0" / "metrics.csv", dir / "b-s0" / "metrics.csv", dir / "b-s1" / "metrics.csv"});
    ASSERT_EQ(r.runs.size(), 3u);
    EXPECT_EQ(r.runs[0].avg_return, 18.5);
    EXPECT_EQ(r.runs[0].avg_cost, 81.5);
    EXPECT_EQ(r.runs[1].avg_return, 4.75);
    EXPECT_EQ(r.runs[1].avg_cost, 2.375);
    EXPECT_EQ(r.runs[2].avg_return, -1.0);
    EXPECT_EQ(r.runs[2].avg_cost, 7.0);
    ASSERT_EQ(r.methods.size(), 2u);
    EXPECT_EQ(r.methods[0].label, "a");
    EXPECT_EQ(r.methods[1].label, "b");
    EXPECT_EQ(r.methods[1].avg_return, (4.75 - 1.0) / 2.0);
    EXPECT_EQ(r.methods[1].avg_cost, (2.375 + 7.0) / 2.0);

    std::ostringstream os;
    write_pareto_csv(r, os);
    EXPECT_EQ(os.str().rfind("kind,label,runs,avg_return,avg_cost\n", 0), 0u);
    EXPECT_NE(os.str().find("method,b,2,"), std::string::npos);
}

TEST(Pareto, ErrorsNameTheFile) {
    const fs::path dir = scratch("pareto-bad");
    spit(dir / "x-s0" / "metrics.csv", metrics_header() + "\n");
    spit(dir / "y-s0" / "metrics.csv", "garbage\n");
    for (const char* run : {"x-s0", "y-s0"}) {
        try {
            pareto_export({dir / run / "metrics.csv"});
            ADD_FAILURE() << run;
        } catch (const std::runtime_error& e) {
            EXPECT_NE(std::string(e.what()).find(run), std::string::npos) << e.what();
        }
    }
    EXPECT_THROW(pareto_export({}), std::invalid_argument);
}

TEST(Cli, BoundPrintsWorkedExample) {
    const fs::path dir = scratch("cli-bound");
    const Cli r = run_cli("bound --alpha 0.1 --gamma 0.9 --k 2 --k-prime 1 --eps 0.5", dir);
    EXPECT_EQ(r.status, 0) << r.out;
    EXPECT_NE(r.out.find("mixed_bound 5.4"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("classic_bound 7.2"), std::string::npos) << r.out;
    EXPECT_NE(run_cli("bound --alpha 0.1 --gamma 1 --k 2 --k-prime 1 --eps 0.5", dir).status, 0);
}

TEST(Cli, TrainEvalVerifyPareto) {
    const fs::path dir = scratch("cli-flow");
    ExperimentConfig c = tiny();
    c.epochs = 2;
    spit(dir / "cfg.txt", write_config(c));
    spit(dir / "post.txt", "constraint = 1 0 : 0.0\nmin_width = 0.05\n");

    const Cli train = run_cli("train --config \"" + (dir / "cfg.txt").string() + "\" --seed 5 --out \"" +
                                  (dir / "runs").string() + "\"",
                              dir);
    ASSERT_EQ(train.status, 0) << train.out;
    const fs::path run = dir / "runs" / run_name(c, 5);
    ASSERT_TRUE(fs::exists(run / "metrics.csv"));
    EXPECT_EQ(read_metrics(run / "metrics.csv").size(), 2u);

    const Cli eval = run_cli("eval --config \"" + (dir / "cfg.txt").string() + "\" --checkpoint \"" +
                                 (run / "checkpoint.json").string() + "\" --episodes 2",
                             dir);
    EXPECT_EQ(eval.status, 0) << eval.out;
    EXPECT_NE(eval.out.find("avg_episode_cost"), std::string::npos);

    const Cli verify = run_cli("verify --checkpoint \"" + (run / "checkpoint.json").string() + "\" --areas \"" +
                                   (run / "areas.jsonl").string() + "\" --postcondition \"" +
                                   (dir / "post.txt").string() + "\" --json \"" + (dir / "report.json").string() + "\"",
                               dir);
    EXPECT_EQ(verify.status, 0) << verify.out;
    EXPECT_NE(verify.out.find("violating"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "report.json"));

    const Cli pareto = run_cli("pareto \"" + (run / "metrics.csv").string() + "\"", dir);
    EXPECT_EQ(pareto.status, 0) << pareto.out;
    EXPECT_NE(pareto.out.find("method," + method_name(c)), std::string::npos) << pareto.out;
}

TEST(Cli, OutputRootFromEnvironment) {
    const fs::path dir = scratch("cli-envroot");
    ExperimentConfig c = tiny();
    c.epochs = 0;
    spit(dir / "cfg.txt", write_config(c));
    const fs::path out = dir / "o.txt";
    const int raw = std::system(("ERETRAIN_OUTPUT_ROOT=\"" + (dir / "root").string() + "\" \"" + ERETRAIN_CLI +
                                 "\" train --config \"" + (dir / "cfg.txt").string() + "\" --seed 1 > \"" +
                                 out.string() + "\" 2>&1")
                                    .c_str());
    EXPECT_EQ(raw, 0) << slurp(out);
    EXPECT_TRUE(fs::exists(dir / "root" / run_name(c, 1) / "metrics.csv"));
}

TEST(Cli, RejectsBadInvocations) {
    const fs::path dir = scratch("cli-bad");
    spit(dir / "bad.txt", "env = gridnav\nmystery = 1\n");
    const Cli unknown = run_cli("train --config \"" + (dir / "bad.txt").string() + "\" --seed 0", dir);
    EXPECT_NE(unknown.status, 0);
    EXPECT_NE(unknown.out.find("unknown key"), std::string::npos) << unknown.out;
    EXPECT_NE(run_cli("train --config \"" + (dir / "bad.txt").string() + "\"", dir).status, 0);
    EXPECT_NE(run_cli("", dir).status, 0);
}
