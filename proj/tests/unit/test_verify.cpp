#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "eretrain/verify.hpp"

using namespace eretrain;

namespace {

Mlp linear(double w, double b) {
    Mlp m({1, 1});
    m.weight(0)(0, 0) = w;
    m.bias(0)(0) = b;
    return m;
}

Mlp tanh_unit() {
    Mlp m({1, 1, 1});
    m.weight(0)(0, 0) = 1.0;
    m.weight(1)(0, 0) = 1.0;
    return m;
}

// y >= 0.25 as -y <= -0.25
std::vector<HalfSpace> at_least_quarter() { return {HalfSpace{{-1.0}, -0.25}}; }

VerifTask random_task(Rng& rng) {
    VerifTask t;
    t.network = Mlp::init({2, 8, 2}, rng, 1.5, 1.0);
    std::vector<double> lo{rng.uniform(-1, 0), rng.uniform(-1, 0)};
    std::vector<double> hi{lo[0] + rng.uniform(0.1, 1.0), lo[1] + rng.uniform(0.1, 1.0)};
    t.precondition = Box(lo, hi);
    const VectorXd centre = t.network.forward(Eigen::Vector2d(0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])));
    t.postcondition = {HalfSpace{{1.0, 0.0}, centre(0) + rng.uniform(-0.2, 0.2)},
                       HalfSpace{{-0.5, 1.0}, -0.5 * centre(0) + centre(1) + rng.uniform(-0.2, 0.2)}};
    t.min_width = 0.02;
    return t;
}

}  // namespace

TEST(Ibp, LinearImage) {
    const Box out = ibp_forward(linear(2.0, 0.0), Box::uniform(1, -1.0, 1.0));
    EXPECT_EQ(out[0].lo, -2.0);
    EXPECT_EQ(out[0].hi, 2.0);
    const Box neg = ibp_forward(linear(-3.0, 1.0), Box::uniform(1, 0.0, 1.0));
    EXPECT_EQ(neg[0].lo, -2.0);
    EXPECT_EQ(neg[0].hi, 1.0);
}

TEST(Ibp, TanhIsMonotone) {
    const Box out = ibp_forward(tanh_unit(), Box::uniform(1, 0.0, 1.0));
    EXPECT_EQ(out[0].lo, 0.0);
    EXPECT_NEAR(out[0].hi, 0.76159, 1e-5);
    EXPECT_NEAR(out[0].hi, std::tanh(1.0), 4e-16);
}

TEST(Ibp, SoundOnRandomNets) {
    Rng rng(1);
    for (int net = 0; net < 10; ++net) {
        const Mlp m = Mlp::init({4, 8, 2}, rng, 1.5, 1.0);
        std::vector<double> lo(4), hi(4);
        for (int i = 0; i < 4; ++i) {
            lo[i] = rng.uniform(-1, 0.5);
            hi[i] = lo[i] + rng.uniform(0.0, 1.0);
        }
        const Box in(lo, hi);
        const Box out = ibp_forward(m, in);
        for (int s = 0; s < 10000; ++s) {
            const State x = sample_uniform(in, rng);
            const VectorXd y = m.forward(Eigen::Map<const VectorXd>(x.data(), 4));
            for (int j = 0; j < 2; ++j) {
                ASSERT_LE(out[j].lo, y(j));
                ASSERT_GE(out[j].hi, y(j));
            }
        }
    }
}

TEST(Ibp, RejectsDimensionMismatch) {
    EXPECT_THROW(ibp_forward(linear(1.0, 0.0), Box::uniform(2, 0.0, 1.0)), std::invalid_argument);
}

TEST(Quantify, IdentityQuarterConverges) {
    double prev_unknown = 2.0;
    for (double w : {1e-1, 1e-2, 1e-3, 1e-5}) {
        const VerifReport r = quantify_violation({linear(1.0, 0.0), Box::uniform(1, 0.0, 1.0), at_least_quarter(), w});
        EXPECT_LE(r.violating_fraction, 0.25);
        EXPECT_GE(r.violating_fraction + r.unknown_fraction, 0.25);
        EXPECT_LE(r.unknown_fraction, prev_unknown);
        prev_unknown = r.unknown_fraction;
    }
    const VerifReport fine = quantify_violation({linear(1.0, 0.0), Box::uniform(1, 0.0, 1.0), at_least_quarter(), 1e-5});
    // only the leaf whose closed end touches 0.25 stays undecided
    EXPECT_NEAR(fine.violating_fraction, 0.25, 1e-5);
    EXPECT_LT(fine.unknown_fraction, 1e-5);
}

TEST(Quantify, RootCertifiedImmediately) {
    const VerifReport r = quantify_violation({linear(1.0, 0.0), Box::uniform(1, 0.5, 1.0), at_least_quarter()});
    EXPECT_EQ(r.safe_fraction, 1.0);
    EXPECT_EQ(r.violating_fraction, 0.0);
    EXPECT_EQ(r.unknown_fraction, 0.0);
    EXPECT_EQ(r.regions_explored, 1u);
}

TEST(Quantify, PointPreconditionDecided) {
    for (double x : {0.1, 0.25, 0.7}) {
        const std::vector<double> p{x};
        const VerifReport r = quantify_violation({linear(1.0, 0.0), Box::point(p), at_least_quarter()});
        EXPECT_EQ(r.unknown_fraction, 0.0);
        EXPECT_EQ(r.violating_fraction, x < 0.25 ? 1.0 : 0.0);
        EXPECT_EQ(r.safe_fraction, x < 0.25 ? 0.0 : 1.0);
    }
}

TEST(Quantify, FractionsSumToOneAndRefinementShrinksUnknown) {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        VerifTask t = random_task(rng);
        double prev_unknown = 2.0;
        for (double w : {0.5, 0.1, 0.02, 0.005}) {
            t.min_width = w;
            const VerifReport r = quantify_violation(t);
            EXPECT_NEAR(r.safe_fraction + r.violating_fraction + r.unknown_fraction, 1.0, 1e-12);
            for (double f : {r.safe_fraction, r.violating_fraction, r.unknown_fraction}) {
                EXPECT_GE(f, 0.0);
                EXPECT_LE(f, 1.0);
            }
            EXPECT_LE(r.unknown_fraction, prev_unknown);
            prev_unknown = r.unknown_fraction;
        }
    }
}

TEST(Quantify, BudgetExhaustionIsFlagged) {
    Rng rng(3);
    VerifTask t = random_task(rng);
    t.min_width = 1e-9;
    t.max_regions = 50;
    const VerifReport r = quantify_violation(t);
    EXPECT_TRUE(r.budget_exhausted);
    EXPECT_LE(r.regions_explored, 50u);
    EXPECT_NEAR(r.safe_fraction + r.violating_fraction + r.unknown_fraction, 1.0, 1e-12);
}

TEST(Quantify, RejectsInvalidTasks) {
    EXPECT_THROW(quantify_violation({linear(1.0, 0.0), Box::uniform(2, 0.0, 1.0), at_least_quarter()}),
                 std::invalid_argument);
    EXPECT_THROW(quantify_violation({linear(1.0, 0.0), Box::uniform(1, 0.0, 1.0), {HalfSpace{{1.0, 1.0}, 0.0}}}),
                 std::invalid_argument);
    EXPECT_THROW(quantify_violation({linear(1.0, 0.0), Box::uniform(1, 0.0, 1.0), {}}), std::invalid_argument);
}

TEST(MonteCarlo, IdentityQuarter) {
    Rng rng(4);
    const VerifTask t{linear(1.0, 0.0), Box::uniform(1, 0.0, 1.0), at_least_quarter()};
    EXPECT_NEAR(mc_violation_oracle(t.network, t, 1000000, rng), 0.25, 0.002);
}

TEST(MonteCarlo, FullySafeTask) {
    Rng rng(5);
    const VerifTask t{linear(1.0, 0.0), Box::uniform(1, 0.5, 1.0), at_least_quarter()};
    EXPECT_EQ(mc_violation_oracle(t.network, t, 10000, rng), 0.0);
}

TEST(MonteCarlo, BracketedByProvableFractions) {
    Rng rng(6);
    constexpr std::size_t n = 40000;
    for (int trial = 0; trial < 20; ++trial) {
        const VerifTask t = random_task(rng);
        const VerifReport r = quantify_violation(t);
        const double est = mc_violation_oracle(t.network, t, n, rng);
        const double lo = r.violating_fraction, hi = r.violating_fraction + r.unknown_fraction;
        const double sigma = std::sqrt(std::max(est * (1 - est), 1.0 / n) / n);
        EXPECT_GE(est, lo - 3 * sigma);
        EXPECT_LE(est, hi + 3 * sigma);
    }
}

TEST(Postcondition, Parses) {
    std::istringstream is("# velocity floor\nconstraint = -1 0 : -0.1\nconstraint = 0 1 : 0.5\nmin_width = 0.01\nmax_regions = 500\n");
    const Postcondition p = parse_postcondition(is);
    ASSERT_EQ(p.constraints.size(), 2u);
    EXPECT_EQ(p.constraints[0].coeffs, (std::vector<double>{-1.0, 0.0}));
    EXPECT_EQ(p.constraints[0].bound, -0.1);
    EXPECT_EQ(p.constraints[1].bound, 0.5);
    EXPECT_EQ(p.min_width, 0.01);
    EXPECT_EQ(p.max_regions, 500u);
}

TEST(Postcondition, ErrorsNameTheLine) {
    for (const char* text : {"constraint = 1 0\n", "\nfoo = 1\n", "constraint = : 1\n", "min_width\n", "# empty\n"}) {
        std::istringstream is(text);
        try {
            parse_postcondition(is);
            ADD_FAILURE() << "accepted: " << text;
        } catch (const std::runtime_error& e) {
            const std::string msg = e.what();
            EXPECT_TRUE(msg.find("line") != std::string::npos || msg.find("no constraints") != std::string::npos) << msg;
        }
    }
}

TEST(Report, JsonFields) {
    const VerifReport r = quantify_violation({linear(1.0, 0.0), Box::uniform(1, 0.5, 1.0), at_least_quarter()});
    const auto j = to_json(r);
    EXPECT_EQ(j.at("safe_fraction").get<double>(), 1.0);
    EXPECT_EQ(j.at("regions_explored").get<std::size_t>(), 1u);
    EXPECT_FALSE(j.at("budget_exhausted").get<bool>());
}
