#include <cmath>

#include <stdexcept>

#include <doctest.h>

#include "pasmr/srl.hpp"
#include "test_util.hpp"

using namespace pasmr;

namespace {

const ModelDims toy{11, 4, 8};

// brute-force oracle: direct power summation, no recursion
std::vector<double> returns_direct(const std::vector<double>& R, double gamma, bool inclusive) {
    const std::size_t L = R.size();
    std::vector<double> g(L, 0.0);
    for (std::size_t i = 0; i < L; ++i) {
        const std::size_t start = inclusive ? i : i + 1;
        for (std::size_t k = start; k < L; ++k)
            g[i] += std::pow(gamma, static_cast<double>(k - i)) * R[k];
    }
    return g;
}

Trajectory make_traj(std::vector<Token> prompt, std::vector<Token> tokens,
                     std::vector<double> cur, std::vector<double> old,
                     std::vector<double> ref) {
    Trajectory t;
    t.prompt = std::move(prompt);
    t.tokens = std::move(tokens);
    t.logp_cur = std::move(cur);
    t.logp_old = std::move(old);
    t.logp_ref = std::move(ref);
    return t;
}

}  // namespace

TEST_CASE("f_reward piecewise constants, including pivot-span format errors") {
    CHECK(f_reward(17, 17) == 1.0);
    CHECK(f_reward(17, 12) == 0.1);
    CHECK(f_reward(std::nullopt, 12) == 0.0);
    CHECK(f_reward(17, std::nullopt) == 0.0);
    CHECK(f_reward(std::nullopt, std::nullopt) == 0.0);
    CHECK(f_reward(0, 0) == 1.0);
}

TEST_CASE("gold_reward piecewise constants") {
    CHECK(gold_reward(7, 7) == 1.0);
    CHECK(gold_reward(8, 7) == 0.1);
    CHECK(gold_reward(std::nullopt, 7) == 0.0);
}

TEST_CASE("kl_term: zero when the policies agree; ln 2 hand case") {
    Trajectory t = make_traj({1}, {2, 3}, {std::log(0.5), -1.0}, {std::log(0.5), -1.0},
                             {std::log(0.25), -1.0});
    CHECK(kl_term(t, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(kl_term(t, 1) == 0.0);

    const PolicyParams p = init_params(toy, 3);
    const PolicySnapshot ref = snapshot(p, SnapshotRole::Reference);
    Rng rng(5);
    const Trajectory same = rollout(p, ref, std::vector<Token>{1, 2}, 0.8, 16, rng);
    for (double v : kl_terms(same)) CHECK(v == 0.0);
}

TEST_CASE("expected sampled-token log-ratio is nonnegative on a toy 3-token model") {
    // enumerate the full next-token distribution at one context
    PolicyParams p = ParamTensors::zeros(ModelDims{3, 2, 4});
    PolicyParams q = ParamTensors::zeros(ModelDims{3, 2, 4});
    p.b_out = {0.9, -0.3, 0.2};
    q.b_out = {-0.5, 0.8, 0.1};
    const std::vector<Token> ctx = {0};
    const auto lp = logits(p, ctx);
    const auto lq = logits(q, ctx);
    double expectation = 0.0;
    for (Token a = 0; a < 3; ++a) {
        const double cur = log_prob_of({lp.data(), 3}, a);
        const double ref = log_prob_of({lq.data(), 3}, a);
        expectation += std::exp(cur) * (cur - ref);
    }
    CHECK(expectation >= 0.0);
    CHECK(expectation > 0.1);  // the two distributions differ materially
}

TEST_CASE("token_rewards: paper-literal and terminal-only hand values") {
    const std::vector<double> kl = {0.5, 0.2};

    const auto literal = token_rewards(1.0, kl, 0.01, RewardSpread::PaperLiteral);
    REQUIRE(literal.size() == 3);
    CHECK(literal[0] == doctest::Approx(0.995).epsilon(1e-14));
    CHECK(literal[1] == doctest::Approx(0.998).epsilon(1e-14));
    CHECK(literal[2] == 1.0);

    const auto terminal = token_rewards(1.0, kl, 0.01, RewardSpread::TerminalOnly);
    CHECK(terminal[0] == doctest::Approx(-0.005).epsilon(1e-14));
    CHECK(terminal[1] == doctest::Approx(-0.002).epsilon(1e-14));
    CHECK(terminal[2] == 1.0);

    // beta = 0 makes every position carry F in paper-literal mode
    const auto flat = token_rewards(0.1, kl, 0.0, RewardSpread::PaperLiteral);
    for (double r : flat) CHECK(r == 0.1);
}

TEST_CASE("returns: hand cases and both conventions") {
    const std::vector<double> R = {0.0, 0.0, 1.0};
    const auto literal = returns(R, 0.99, ReturnConvention::PaperLiteral);
    CHECK(literal[0] == doctest::Approx(0.9801).epsilon(1e-12));
    CHECK(literal[1] == doctest::Approx(0.99).epsilon(1e-12));
    CHECK(literal[2] == 0.0);

    const auto inclusive = returns(R, 0.99, ReturnConvention::Inclusive);
    CHECK(inclusive[0] == doctest::Approx(0.9801).epsilon(1e-12));
    CHECK(inclusive[1] == doctest::Approx(0.99).epsilon(1e-12));
    CHECK(inclusive[2] == 1.0);

    const std::vector<double> zeros = {0.0, 0.0, 0.0, 0.0};
    for (double g : returns(zeros, 0.99, ReturnConvention::PaperLiteral)) CHECK(g == 0.0);
    for (double g : returns(zeros, 0.99, ReturnConvention::Inclusive)) CHECK(g == 0.0);
}

TEST_CASE("returns equal direct summation for every reward sequence of length <= 5") {
    // values {0, 0.1, 1}; both conventions; 1e-12 agreement
    const double values[3] = {0.0, 0.1, 1.0};
    for (int L = 1; L <= 5; ++L) {
        int combos = 1;
        for (int i = 0; i < L; ++i) combos *= 3;
        for (int c = 0; c < combos; ++c) {
            std::vector<double> R(static_cast<std::size_t>(L));
            int rem = c;
            for (int i = 0; i < L; ++i) {
                R[static_cast<std::size_t>(i)] = values[rem % 3];
                rem /= 3;
            }
            for (bool inclusive : {false, true}) {
                const auto got = returns(
                    R, 0.99, inclusive ? ReturnConvention::Inclusive : ReturnConvention::PaperLiteral);
                const auto want = returns_direct(R, 0.99, inclusive);
                for (int i = 0; i < L; ++i)
                    CHECK(got[static_cast<std::size_t>(i)] ==
                          doctest::Approx(want[static_cast<std::size_t>(i)]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("normalize_advantages: hand case, constants, pooled moments") {
    std::vector<std::vector<double>> pooled = {{1.0, 2.0}, {3.0}};
    normalize_advantages(pooled);
    CHECK(pooled[0][0] == doctest::Approx(-1.2247448713915890).epsilon(1e-6));
    CHECK(pooled[0][1] == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(pooled[1][0] == doctest::Approx(1.2247448713915890).epsilon(1e-6));

    std::vector<std::vector<double>> constant = {{2.5, 2.5, 2.5, 2.5}};
    normalize_advantages(constant);
    for (double v : constant[0]) CHECK(v == 0.0);

    std::vector<std::vector<double>> batch;
    Rng rng(8);
    for (int i = 0; i < 7; ++i) {
        std::vector<double> g(static_cast<std::size_t>(3 + i));
        for (auto& v : g) v = rng.uniform(-3.0, 5.0);
        batch.push_back(g);
    }
    normalize_advantages(batch);
    double mean = 0.0, var = 0.0;
    std::size_t n = 0;
    for (const auto& g : batch)
        for (double v : g) {
            mean += v;
            ++n;
        }
    mean /= static_cast<double>(n);
    for (const auto& g : batch)
        for (double v : g) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("clip_term hand oracle holds exactly") {
    CHECK(clip_term(1.5, 1.0, 0.2) == 1.2);
    CHECK(clip_term(0.5, -1.0, 0.2) == -0.8);
    CHECK(clip_term(1.0, 3.7, 0.2) == 3.7);
    CHECK(clip_term(1.0, -3.7, 0.2) == -3.7);
}

TEST_CASE("clip_objective: r = 1 gives mean advantage and the plain PG gradient") {
    const PolicyParams p = init_params(toy, 44);
    const PolicySnapshot ref = snapshot(init_params(toy, 45), SnapshotRole::Reference);
    Rng rng(6);
    std::vector<Trajectory> batch;
    batch.push_back(rollout(p, ref, std::vector<Token>{1, 2, 3}, 0.9, 10, rng));
    batch.push_back(rollout(p, ref, std::vector<Token>{4, 5}, 0.9, 10, rng));

    // sampled under p itself: logp_old equals fresh logp -> r = 1 exactly
    std::vector<std::vector<double>> adv;
    double mean = 0.0;
    std::size_t n = 0;
    Rng arng(7);
    for (const auto& t : batch) {
        std::vector<double> a(t.tokens.size());
        for (auto& v : a) {
            v = arng.uniform(-2.0, 2.0);
            mean += v;
            ++n;
        }
        adv.push_back(a);
    }
    mean /= static_cast<double>(n);

    const ClipResult res = clip_objective(p, batch, adv, 0.2, nullptr);
    CHECK(res.objective == doctest::Approx(mean).epsilon(1e-12));
    CHECK(res.clip_fraction == 0.0);
}

TEST_CASE("clip_objective gradient matches finite differences on a frozen toy batch") {
    // old policy differs from the current one, so ratios move away from 1
    const PolicyParams p_old = init_params(toy, 404);
    PolicyParams p = p_old;
    for (auto ref : p.tensors())
        for (double& v : *ref.data) v += 0.01;  // fixed small offset keeps ratios off the kinks

    const PolicySnapshot ref = snapshot(init_params(toy, 405), SnapshotRole::Reference);
    Rng rng(11);
    std::vector<Trajectory> batch;
    batch.push_back(rollout(p_old, ref, std::vector<Token>{1, 2}, 0.8, 8, rng));
    batch.push_back(rollout(p_old, ref, std::vector<Token>{3}, 0.8, 8, rng));

    std::vector<std::vector<double>> adv;
    Rng arng(12);
    for (const auto& t : batch) {
        std::vector<double> a(t.tokens.size());
        for (auto& v : a) v = arng.uniform(-1.5, 1.5);
        adv.push_back(a);
    }

    ParamTensors grads = ParamTensors::zeros(toy);
    clip_objective(p, batch, adv, 0.2, &grads);

    // finite differences on the objective itself
    PolicyParams probe = p;
    testutil::check_gradients(probe, grads, [&](const PolicyParams& q) {
        return clip_objective(q, batch, adv, 0.2, nullptr).objective;
    });
}

TEST_CASE("extract_pivot") {
    auto mk = [](std::vector<Token> tokens) {
        Trajectory t;
        t.tokens = std::move(tokens);
        return t;
    };
    const Token x = 20, y = 21;
    const auto got = extract_pivot(mk({tok::piv_open, x, y, tok::piv_close, x}));
    REQUIRE(got.has_value());
    CHECK(*got == std::vector<Token>{x, y});

    CHECK_FALSE(extract_pivot(mk({tok::piv_open, x, y})).has_value());
    CHECK_FALSE(extract_pivot(mk({x, y, tok::piv_close})).has_value());
    CHECK_FALSE(extract_pivot(mk({tok::piv_close, x, tok::piv_open})).has_value());
    CHECK_FALSE(
        extract_pivot(mk({tok::piv_open, x, tok::piv_open, tok::piv_close})).has_value());

    const auto empty = extract_pivot(mk({tok::piv_open, tok::piv_close, x}));
    REQUIRE(empty.has_value());
    CHECK(empty->empty());
}

TEST_CASE("rollout invariants on an untrained model") {
    const PolicyParams p = init_params(toy, 50);
    const PolicySnapshot ref = snapshot(p, SnapshotRole::Reference);
    Rng r1(3), r2(3);
    const Trajectory a = rollout(p, ref, std::vector<Token>{1, 2}, 0.7, 12, r1);
    const Trajectory b = rollout(p, ref, std::vector<Token>{1, 2}, 0.7, 12, r2);
    CHECK(a.tokens == b.tokens);
    CHECK(a.tokens.size() <= 12);
    CHECK(a.logp_cur.size() == a.tokens.size());
    CHECK(a.logp_old.size() == a.tokens.size());
    CHECK(a.logp_ref.size() == a.tokens.size());
    CHECK(a.logp_cur == a.logp_old);  // collected under the sampling policy
    CHECK((a.pivot_span.has_value() || !a.format_ok));

    Rng g1(0), g2(1);
    const Trajectory c = rollout(p, ref, std::vector<Token>{1, 2}, 0.0, 12, g1);
    const Trajectory d = rollout(p, ref, std::vector<Token>{1, 2}, 0.0, 12, g2);
    CHECK(c.tokens == d.tokens);  // greedy ignores the rng
}

TEST_CASE("reward trace arrays all share the trajectory length") {
    const PolicyParams p = init_params(toy, 51);
    const PolicySnapshot ref = snapshot(init_params(toy, 52), SnapshotRole::Reference);
    Rng rng(9);
    const Trajectory t = rollout(p, ref, std::vector<Token>{1}, 1.0, 9, rng);
    const std::size_t L = t.tokens.size();
    const auto kl = kl_terms(t);
    CHECK(kl.size() == L);
    const auto R = token_rewards(0.1, {kl.data(), L - 1}, 0.01, RewardSpread::PaperLiteral);
    CHECK(R.size() == L);
    const auto G = returns(R, 0.99, ReturnConvention::PaperLiteral);
    CHECK(G.size() == L);
}
