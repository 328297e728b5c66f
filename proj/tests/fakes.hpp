#pragma once

// Shared fixtures: random matrices and small untrained surrogates.

#include <string>

#include <Eigen/Core>

#include "auxetic/inverse_design.hpp"
#include "auxetic/neural.hpp"
#include "auxetic/random.hpp"

namespace fakes {

inline Eigen::MatrixXd randn(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  auxetic::Rng rng(seed);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.normal();
  return m;
}

inline auxetic::neural::ModelCheckpoint surrogate(const std::string& kind, std::uint64_t seed) {
  auxetic::neural::ModelCheckpoint c;
  c.kind = kind;
  c.spec = {{3, 12, 30}, seed};
  c.net = auxetic::neural::Mlp::he_initialized(c.spec);
  c.net.params() += 0.05 * randn(static_cast<Eigen::Index>(c.net.n_params()), 1, seed + 1).col(0);
  c.input.mean = Eigen::Vector3d(13.0, 1.3, 1.2);
  c.input.std = Eigen::Vector3d(4.0, 0.5, 0.6);
  c.output.mean = Eigen::VectorXd::LinSpaced(30, -0.1, -0.4);
  c.output.std = Eigen::VectorXd::Constant(30, 0.2);
  c.extra["strain_grid"] = auxetic::mechanics::default_strain_grid();
  return c;
}

struct Pair {
  auxetic::neural::ModelCheckpoint nu = surrogate("forward_nu", 1);
  auxetic::neural::ModelCheckpoint sigma = surrogate("forward_sigma", 2);
  auxetic::inverse::Surrogates s{&nu, &sigma};
};

}  // namespace fakes
