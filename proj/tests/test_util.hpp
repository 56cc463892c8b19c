#pragma once

#include <Eigen/Dense>
#include <random>

#include "narrowforge/network.hpp"
#include "narrowforge/pwl.hpp"
#include "narrowforge/ridge.hpp"

namespace nftest {

using narrowforge::ActivationTag;
using narrowforge::AffineMap;
using narrowforge::Layer;
using narrowforge::Network;

inline Eigen::MatrixXd random_matrix(int rows, int cols, std::mt19937_64& rng,
                                     double scale = 1.0) {
    std::normal_distribution<double> gauss(0.0, scale);
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = gauss(rng);
    return m;
}

inline Eigen::VectorXd random_vector(int n, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> gauss(0.0, scale);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = gauss(rng);
    return v;
}

// Well-conditioned random invertible matrix: orthogonal * diag(0.5 .. 2).
inline Eigen::MatrixXd random_invertible(int n, std::mt19937_64& rng) {
    Eigen::MatrixXd a = random_matrix(n, n, rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ();
    std::uniform_real_distribution<double> unif(0.5, 2.0);
    Eigen::VectorXd diag(n);
    for (int i = 0; i < n; ++i) diag[i] = unif(rng);
    return q * diag.asDiagonal();
}

inline Network random_leaky_network(int dim, int depth, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> beta_dist(0.2, 2.0);
    std::vector<Layer> layers;
    for (int i = 0; i < depth; ++i)
        layers.push_back(Layer{AffineMap(random_invertible(dim, rng),
                                         random_vector(dim, rng, 0.5)),
                               ActivationTag::leaky_relu(beta_dist(rng))});
    return Network(dim, std::move(layers),
                   AffineMap(random_invertible(dim, rng), random_vector(dim, rng, 0.5)));
}

// Strictly increasing PWL with the given number of breakpoints in [-8, 8].
inline narrowforge::PwlFunction random_increasing_pwl(int breakpoints,
                                                      std::mt19937_64& rng) {
    std::uniform_real_distribution<double> pos(-8.0, 8.0);
    std::uniform_real_distribution<double> logslope(-2.3, 2.3);
    std::vector<double> bps;
    while (static_cast<int>(bps.size()) < breakpoints) {
        const double candidate = pos(rng);
        bool ok = true;
        for (double b : bps)
            if (std::abs(b - candidate) < 1e-3) ok = false;
        if (ok) bps.push_back(candidate);
    }
    std::sort(bps.begin(), bps.end());
    Eigen::VectorXd bp(breakpoints), slopes(breakpoints + 1);
    for (int i = 0; i < breakpoints; ++i) bp[i] = bps[i];
    for (int i = 0; i <= breakpoints; ++i) slopes[i] = std::exp(logslope(rng));
    std::normal_distribution<double> gauss(0.0, 1.0);
    return narrowforge::PwlFunction(bp, slopes, 0.0, gauss(rng));
}

inline narrowforge::RidgeTerm random_ridge_term(int prefix_dim, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> a_dist(-3.0, 3.0);
    std::uniform_real_distribution<double> c_dist(-1.0, 1.0);
    std::uniform_real_distribution<double> beta_dist(0.1, 10.0);
    narrowforge::RidgeTerm t;
    t.a = a_dist(rng);
    t.b = random_vector(prefix_dim, rng);
    t.c = c_dist(rng);
    t.beta = beta_dist(rng);
    return t;
}

}  // namespace nftest
