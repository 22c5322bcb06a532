#pragma once

#include <initializer_list>

#include "cfdr/annotations.hpp"
#include "cfdr/core.hpp"
#include "cfdr/environments.hpp"

namespace testing {

using cfdr::Index;
using cfdr::MatrixX;
using cfdr::VectorX;

inline VectorX<double> vec(std::initializer_list<double> xs) {
    VectorX<double> v(static_cast<Index>(xs.size()));
    Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

inline cfdr::Policy<double> constant_policy(Index contexts, std::initializer_list<double> probs) {
    return cfdr::Policy<double>::constant(contexts, vec(probs));
}

inline cfdr::EvaluationProblem<double> two_context(std::initializer_list<double> pb,
                                                   std::initializer_list<double> pe,
                                                   const cfdr::TwoContextConfig& cfg = {}) {
    return {cfdr::build_two_context(cfg), constant_policy(2, pb), constant_policy(2, pe)};
}

/// Single-context environment with the given means and a shared std.
inline cfdr::EnvSpec<double> one_context(std::initializer_list<double> means, double sd) {
    const auto m = vec(means);
    return cfdr::EnvSpec<double>("one", vec({1.0}), m.transpose(),
                                 MatrixX<double>::Constant(1, m.size(), sd));
}

}  // namespace testing
