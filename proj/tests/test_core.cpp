#include <catch_amalgamated.hpp>

#include "missmdp/core.hpp"

using namespace missmdp;

TEST_CASE("feature space encodes and decodes states round trip") {
    FeatureSpace space({3, 2, 4});
    REQUIRE(space.state_count() == 24);
    REQUIRE(space.observation_count() == 4 * 3 * 5);
    for (StateId s = 0; s < space.state_count(); ++s) REQUIRE(space.encode(space.decode(s)) == s);
    REQUIRE(space.encode({0, 0, 0}) == 0);
    REQUIRE(space.encode({1, 0, 0}) == 1);
    REQUIRE(space.encode({0, 1, 0}) == 3);
    REQUIRE(space.encode({0, 0, 1}) == 6);
}

TEST_CASE("feature space rejects invalid construction and values") {
    REQUIRE_THROWS_AS(FeatureSpace(std::vector<int>{}), std::invalid_argument);
    REQUIRE_THROWS_AS(FeatureSpace({2, 0}), std::invalid_argument);
    REQUIRE_THROWS_AS(FeatureSpace(std::vector<int>(21, 2)), std::invalid_argument);
    FeatureSpace space({2, 2});
    REQUIRE_THROWS_AS(space.encode({2, 0}), std::out_of_range);
    REQUIRE_THROWS_AS(space.encode({0}), std::invalid_argument);
    REQUIRE_THROWS_AS(space.decode(4), std::out_of_range);
    REQUIRE_THROWS_AS(space.decode_observation(9), std::out_of_range);
}

TEST_CASE("observation codec keeps missing entries distinct from values") {
    FeatureSpace space({2, 3});
    for (ObsId z = 0; z < space.observation_count(); ++z)
        REQUIRE(space.encode_observation(space.decode_observation(z)) == z);
    REQUIRE(space.encode_observation({kMissing, kMissing}) == 0);
    Observation z = space.decode_observation(space.encode_observation({1, kMissing}));
    REQUIRE(z == Observation{1, kMissing});
}

TEST_CASE("indicators mark observed features") {
    REQUIRE(indicator_of({1, 0}) == 0b11u);
    REQUIRE(indicator_of({1, kMissing}) == 0b01u);
    REQUIRE(indicator_of({kMissing, kMissing}) == 0b00u);
    REQUIRE(apply_indicator({1, 0}, 0b01u) == Observation{1, kMissing});
    REQUIRE(apply_indicator({1, 0}, 0b11u) == Observation{1, 0});
    REQUIRE(indicator_of(apply_indicator({1, 1}, 0b10u)) == 0b10u);
}

TEST_CASE("admittability accepts matches and missing entries only") {
    // with values a = 0 and b = 1: (b, missing) and (b, a) fit state (b, a); (a, missing) does not
    StateVec s = {1, 0};
    REQUIRE(admits(s, {1, kMissing}));
    REQUIRE(admits(s, {1, 0}));
    REQUIRE(admits(s, {kMissing, kMissing}));
    REQUIRE_FALSE(admits(s, {0, kMissing}));
    REQUIRE_FALSE(admits(s, {1, 1}));
    REQUIRE_THROWS_AS(admits(s, {1}), std::invalid_argument);
}

TEST_CASE("indicator strings use one character per feature") {
    REQUIRE(indicator_to_string(0b101u, 3) == "101");
    REQUIRE(indicator_to_string(0b0u, 2) == "00");
    REQUIRE(indicator_from_string("101") == 0b101u);
    REQUIRE(indicator_from_string(indicator_to_string(0b110u, 3)) == 0b110u);
    REQUIRE_THROWS_AS(indicator_from_string(""), std::invalid_argument);
    REQUIRE_THROWS_AS(indicator_from_string("10x"), std::invalid_argument);
}

TEST_CASE("observation text uses underscores for missing entries") {
    REQUIRE(observation_to_string({2, kMissing, 0}) == "2,_,0");
    REQUIRE(observation_to_string({kMissing}) == "_");
}
