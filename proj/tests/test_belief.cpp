#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "missmdp/belief.hpp"

using namespace missmdp;

namespace {

constexpr int X = kMissing;

Belief random_belief(std::int64_t states, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.05, 1.0);
    Belief b;
    double sum = 0.0;
    for (StateId s = 0; s < states; ++s) {
        double w = unit(rng);
        b.push_back({s, w});
        sum += w;
    }
    for (auto& e : b) e.prob /= sum;
    return b;
}

/** Dense textbook filter: posterior(s') ∝ M(z|s') Σ_s T(s'|s,a) b(s). */
std::vector<double> dense_update(const MissMdp& model, const MissingnessTable& table, const Belief& b, int action,
                                 ObsId z) {
    const FeatureSpace& space = model.space();
    Observation obs = space.decode_observation(z);
    std::vector<double> post(static_cast<std::size_t>(model.state_count()), 0.0);
    for (const auto& e : b)
        for (const auto& t : model.transitions(e.state, action))
            post[static_cast<std::size_t>(t.next)] += e.prob * t.prob;
    double norm = 0.0;
    for (StateId s = 0; s < model.state_count(); ++s) {
        double w = admits(space.decode(s), obs) ? table.mask_probability(s, indicator_of(obs)) : 0.0;
        post[static_cast<std::size_t>(s)] *= w;
        norm += post[static_cast<std::size_t>(s)];
    }
    for (auto& p : post) p /= norm;
    return post;
}

void require_matches(const Belief& got, const std::vector<double>& want) {
    for (StateId s = 0; s < static_cast<StateId>(want.size()); ++s) {
        double w = want[static_cast<std::size_t>(s)];
        if (w < kBeliefPrune) continue;
        REQUIRE(belief_mass(got, s) == Catch::Approx(w).epsilon(1e-12));
    }
}

}  // namespace

TEST_CASE("normalization prunes negligible mass and rejects zero mass") {
    Belief b = {{0, 2.0}, {1, 1.0}, {2, 1e-15}};
    normalize_belief(b);
    REQUIRE(b.size() == 2);
    REQUIRE(belief_mass(b, 0) == Catch::Approx(2.0 / 3.0));
    Belief zero = {{0, 0.0}};
    REQUIRE_THROWS_AS(normalize_belief(zero), ImpossibleObservation);
}

TEST_CASE("prediction applies the transition kernel") {
    auto model = fixtures::pair_model();
    Belief b = {{0, 1.0}};
    Belief pred = predict_belief(model, b, 0);
    double mass = 0.0;
    for (const auto& e : pred) mass += e.prob;
    REQUIRE(mass == Catch::Approx(1.0).epsilon(1e-12));
    REQUIRE(belief_mass(pred, 1) == Catch::Approx(0.45));   // 0.5 - bias/2 at s=0, a=0
    REQUIRE(belief_mass(pred, 2) == Catch::Approx(0.35));
    REQUIRE(belief_mass(pred, 0) == Catch::Approx(0.2));
}

TEST_CASE("censoring shifts the posterior away from the ignorable update") {
    auto model = fixtures::censored_pair_model();
    auto table = fixtures::censored_pair_table();
    ObsId hidden = model.space().encode_observation({X});
    Belief b = {{0, 0.5}, {1, 0.5}};

    Belief full = update_belief(model, table, b, 0, hidden);
    REQUIRE(belief_mass(full, 0) == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
    REQUIRE(belief_mass(full, 1) == Catch::Approx(2.0 / 3.0).epsilon(1e-12));

    Belief ignorable = update_belief_ignorable(model, b, 0, hidden);
    REQUIRE(belief_mass(ignorable, 0) == Catch::Approx(0.5).epsilon(1e-12));
    REQUIRE(belief_mass(ignorable, 1) == Catch::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("the full update is invariant to missingness exactly when it is MAR") {
    auto model = fixtures::pair_model();
    std::mt19937_64 rng(99);
    auto agree_everywhere = [&](const MissingnessTable& table) {
        for (int trial = 0; trial < 300; ++trial) {
            Belief b = random_belief(4, rng);
            int a = static_cast<int>(rng() % 2);
            for (const auto& [z, pz] : observation_distribution(model, table, b, a)) {
                if (pz < 1e-9) continue;
                Belief full = update_belief(model, table, b, a, z);
                Belief ign = update_belief_ignorable(model, b, a, z);
                for (StateId s = 0; s < 4; ++s)
                    if (std::fabs(belief_mass(full, s) - belief_mass(ign, s)) >
                        1e-12 * std::max(1.0, belief_mass(full, s)))
                        return false;
            }
        }
        return true;
    };
    REQUIRE(agree_everywhere(fixtures::mcar_pair_table()));
    REQUIRE(agree_everywhere(fixtures::simple_mar_pair_table()));
    REQUIRE(agree_everywhere(fixtures::mar_pair_table()));
    REQUIRE_FALSE(agree_everywhere(fixtures::mnar_pair_table()));
}

TEST_CASE("the sparse update matches a dense reference filter") {
    auto model = fixtures::pair_model();
    auto table = fixtures::mnar_pair_table();
    std::mt19937_64 rng(7);
    int checked = 0;
    for (int trial = 0; trial < 200; ++trial) {
        Belief b = random_belief(4, rng);
        int a = static_cast<int>(rng() % 2);
        for (const auto& [z, pz] : observation_distribution(model, table, b, a)) {
            if (pz < 1e-6) continue;
            require_matches(update_belief(model, table, b, a, z), dense_update(model, table, b, a, z));
            ++checked;
        }
    }
    REQUIRE(checked > 400);
}

TEST_CASE("two chained updates match the joint trajectory posterior") {
    auto model = fixtures::pair_model();
    auto table = fixtures::mnar_pair_table();
    const FeatureSpace& space = model.space();
    ObsId z0 = space.encode_observation({0, X});
    ObsId z1 = space.encode_observation({1, X});
    ObsId z2 = space.encode_observation({1, 0});
    int a0 = 1, a1 = 0;

    Belief filtered = filter_initial(model, table, z0);
    filtered = update_belief(model, table, filtered, a0, z1);
    filtered = update_belief(model, table, filtered, a1, z2);

    auto emission = [&](StateId s, ObsId z) {
        Observation obs = space.decode_observation(z);
        return admits(space.decode(s), obs) ? table.mask_probability(s, indicator_of(obs)) : 0.0;
    };
    std::vector<double> joint(4, 0.0);
    double norm = 0.0;
    for (StateId s0 = 0; s0 < 4; ++s0) {
        double base = 0.25 * emission(s0, z0);
        if (base == 0.0) continue;
        for (const auto& t1 : model.transitions(s0, a0)) {
            double mid = base * t1.prob * emission(t1.next, z1);
            if (mid == 0.0) continue;
            for (const auto& t2 : model.transitions(t1.next, a1)) {
                double w = mid * t2.prob * emission(t2.next, z2);
                joint[static_cast<std::size_t>(t2.next)] += w;
                norm += w;
            }
        }
    }
    for (StateId s = 0; s < 4; ++s)
        REQUIRE(belief_mass(filtered, s) ==
                Catch::Approx(joint[static_cast<std::size_t>(s)] / norm).epsilon(1e-12).margin(1e-12));
}

TEST_CASE("episode-start filtering weighs the prior by emission probability") {
    auto model = fixtures::censored_pair_model();
    auto table = fixtures::censored_pair_table();
    const FeatureSpace& space = model.space();

    Belief hidden = filter_initial(model, table, space.encode_observation({X}));
    REQUIRE(belief_mass(hidden, 0) == Catch::Approx(1.0 / 3.0));
    REQUIRE(belief_mass(hidden, 1) == Catch::Approx(2.0 / 3.0));

    Belief seen = filter_initial(model, table, space.encode_observation({0}));
    REQUIRE(seen.size() == 1);
    REQUIRE(belief_mass(seen, 0) == Catch::Approx(1.0));

    REQUIRE_THROWS_AS(filter_initial(model, table, space.encode_observation({1})), ImpossibleObservation);
}

TEST_CASE("zero-likelihood observations raise a dedicated error") {
    auto model = fixtures::censored_pair_model();
    auto table = fixtures::censored_pair_table();
    const FeatureSpace& space = model.space();
    Belief at_one = {{1, 1.0}};
    REQUIRE_THROWS_AS(update_belief(model, table, at_one, 0, space.encode_observation({1})), ImpossibleObservation);
    Belief at_zero = {{0, 1.0}};
    REQUIRE_THROWS_AS(update_belief_ignorable(model, at_zero, 0, space.encode_observation({1})),
                      ImpossibleObservation);
}

TEST_CASE("successor observation probabilities form a distribution") {
    auto model = fixtures::pair_model();
    auto table = fixtures::mar_pair_table();
    std::mt19937_64 rng(3);
    Belief b = random_belief(4, rng);
    auto dist = observation_distribution(model, table, b, 1);
    double total = 0.0;
    for (const auto& [z, p] : dist) {
        REQUIRE(p >= 0.0);
        REQUIRE(observation_likelihood(model, table, b, 1, z) == Catch::Approx(p).epsilon(1e-12));
        total += p;
    }
    REQUIRE(total == Catch::Approx(1.0).epsilon(1e-12));
}
