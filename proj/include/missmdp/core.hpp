#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace missmdp {

using StateId = std::int32_t;
using ObsId = std::int64_t;

/** Sentinel for an unobserved feature value inside an Observation. */
inline constexpr int kMissing = -1;

/**
 * A factored state is a vector of feature values; an observation is the same
 * vector with some entries replaced by kMissing. Indicator masks record which
 * features are observed: bit i set means feature i is visible.
 */
using StateVec = std::vector<int>;
using Observation = std::vector<int>;
using IndicatorMask = std::uint32_t;

/**
 * Mixed-radix codec for a factored space: states are dense ids in
 * [0, size()), observations are dense ids over per-feature alphabets extended
 * with the missing symbol. Feature 0 is the least-significant digit.
 */
class FeatureSpace {
public:
    FeatureSpace() = default;

    explicit FeatureSpace(std::vector<int> domains) : domains_(std::move(domains)) {
        if (domains_.empty()) throw std::invalid_argument("feature space needs at least one feature");
        if (domains_.size() > 20) throw std::invalid_argument("feature count above supported limit (20)");
        state_count_ = 1;
        obs_count_ = 1;
        for (int d : domains_) {
            if (d < 1) throw std::invalid_argument("feature domain size must be >= 1");
            state_count_ *= static_cast<std::int64_t>(d);
            obs_count_ *= static_cast<std::int64_t>(d) + 1;
        }
    }

    int feature_count() const { return static_cast<int>(domains_.size()); }
    int domain(int i) const { return domains_[static_cast<std::size_t>(i)]; }
    const std::vector<int>& domains() const { return domains_; }
    std::int64_t state_count() const { return state_count_; }
    /** Size of the full observation space, missing symbols included. */
    std::int64_t observation_count() const { return obs_count_; }
    IndicatorMask full_mask() const { return (1u << domains_.size()) - 1u; }

    StateId encode(const StateVec& values) const {
        check_arity(values.size());
        std::int64_t id = 0;
        for (int i = feature_count() - 1; i >= 0; --i) {
            int v = values[static_cast<std::size_t>(i)];
            if (v < 0 || v >= domain(i)) throw std::out_of_range("feature value out of domain");
            id = id * domain(i) + v;
        }
        return static_cast<StateId>(id);
    }

    StateVec decode(StateId id) const {
        if (id < 0 || id >= state_count_) throw std::out_of_range("state id out of range");
        StateVec values(domains_.size());
        std::int64_t rest = id;
        for (int i = 0; i < feature_count(); ++i) {
            values[static_cast<std::size_t>(i)] = static_cast<int>(rest % domain(i));
            rest /= domain(i);
        }
        return values;
    }

    ObsId encode_observation(const Observation& z) const {
        check_arity(z.size());
        std::int64_t id = 0;
        for (int i = feature_count() - 1; i >= 0; --i) {
            int v = z[static_cast<std::size_t>(i)];
            if (v != kMissing && (v < 0 || v >= domain(i))) throw std::out_of_range("observation value out of domain");
            id = id * (domain(i) + 1) + (v == kMissing ? 0 : v + 1);
        }
        return id;
    }

    Observation decode_observation(ObsId id) const {
        if (id < 0 || id >= obs_count_) throw std::out_of_range("observation id out of range");
        Observation z(domains_.size());
        std::int64_t rest = id;
        for (int i = 0; i < feature_count(); ++i) {
            int digit = static_cast<int>(rest % (domain(i) + 1));
            z[static_cast<std::size_t>(i)] = digit == 0 ? kMissing : digit - 1;
            rest /= domain(i) + 1;
        }
        return z;
    }

private:
    void check_arity(std::size_t n) const {
        if (n != domains_.size()) throw std::invalid_argument("value vector arity mismatch");
    }

    std::vector<int> domains_;
    std::int64_t state_count_ = 0;
    std::int64_t obs_count_ = 0;
};

/** Which features of z are observed. */
inline IndicatorMask indicator_of(const Observation& z) {
    IndicatorMask mask = 0;
    for (std::size_t i = 0; i < z.size(); ++i)
        if (z[i] != kMissing) mask |= 1u << i;
    return mask;
}

/** Masks state values down to the features selected by `mask`. */
inline Observation apply_indicator(const StateVec& s, IndicatorMask mask) {
    Observation z(s.size());
    for (std::size_t i = 0; i < s.size(); ++i)
        z[i] = (mask >> i) & 1u ? s[i] : kMissing;
    return z;
}

/** z is admittable by s when every observed entry of z matches s. */
inline bool admits(const StateVec& s, const Observation& z) {
    if (s.size() != z.size()) throw std::invalid_argument("arity mismatch in admits");
    for (std::size_t i = 0; i < s.size(); ++i)
        if (z[i] != kMissing && z[i] != s[i]) return false;
    return true;
}

inline std::string indicator_to_string(IndicatorMask mask, int feature_count) {
    std::string out(static_cast<std::size_t>(feature_count), '0');
    for (int i = 0; i < feature_count; ++i)
        if ((mask >> i) & 1u) out[static_cast<std::size_t>(i)] = '1';
    return out;
}

inline IndicatorMask indicator_from_string(const std::string& text) {
    if (text.empty() || text.size() > 20) throw std::invalid_argument("bad indicator string length");
    IndicatorMask mask = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '1')
            mask |= 1u << i;
        else if (text[i] != '0')
            throw std::invalid_argument("indicator string must be 0/1 characters");
    }
    return mask;
}

inline std::string observation_to_string(const Observation& z) {
    std::string out;
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (i) out += ',';
        out += z[i] == kMissing ? std::string("_") : std::to_string(z[i]);
    }
    return out;
}

}  // namespace missmdp
