#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "mfgsig/grid.hpp"

namespace mfgsig {

// Candidate position distributions mu[s_q][t_k], one density per quadrature
// node and time level.
struct PositionFlow {
  std::vector<std::vector<PositionDensity>> slices;

  std::size_t states() const { return slices.size(); }
  std::size_t levels() const { return slices.empty() ? 0 : slices.front().size(); }

  const PositionDensity& at(std::size_t q, std::size_t k) const { return slices[q][k]; }
  PositionDensity& at(std::size_t q, std::size_t k) { return slices[q][k]; }

  // Densities of every node at level k.
  std::vector<PositionDensity> level(std::size_t k) const {
    std::vector<PositionDensity> out;
    out.reserve(states());
    for (const auto& s : slices) out.push_back(s[k]);
    return out;
  }

  static PositionFlow constant(std::size_t Q, std::size_t levels, const PositionDensity& rho) {
    return {std::vector<std::vector<PositionDensity>>(Q, std::vector<PositionDensity>(levels, rho))};
  }

  // (1 - w) * this + w * other, slice by slice.
  PositionFlow blend(const PositionFlow& other, double w) const {
    if (other.states() != states() || other.levels() != levels()) {
      throw std::invalid_argument("PositionFlow::blend: shape mismatch");
    }
    PositionFlow out = *this;
    for (std::size_t q = 0; q < states(); ++q) {
      for (std::size_t k = 0; k < levels(); ++k) {
        auto& v = out.slices[q][k].values;
        const auto& o = other.slices[q][k].values;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = (1.0 - w) * v[i] + w * o[i];
      }
    }
    return out;
  }
};

}  // namespace mfgsig
