#pragma once

#include <cstdint>
#include <vector>

#include "mpsamp/tensor.hpp"

namespace mpsamp {

// Chain of site tensors gamma[i] of shape (bond_dims[i], bond_dims[i+1], d)
// plus per-bond coefficient vectors lambda[i] of length bond_dims[i+1].
// Lambdas are nonnegative, nonincreasing, and unit-norm (sum of squares 1);
// the sampler weights measurement outcomes by lambda squared.
struct MpsState {
    std::size_t num_sites = 0;
    std::size_t phys_dim = 0;
    std::vector<std::size_t> bond_dims;        // length num_sites + 1, boundaries 1
    std::vector<ComplexTensor> gammas;         // num_sites tensors
    std::vector<std::vector<double>> lambdas;  // num_sites vectors

    void validate() const;
};

// Per-site effective bond dimensions chi_i <= chi_max. compute_ratio is the
// fraction of full-chi contraction work the schedule keeps:
//   sum_i chi_{i-1} * chi_i / (M * chi_max^2).
struct BondSchedule {
    std::vector<std::size_t> per_site_chi;  // length M + 1
    std::size_t chi_max = 0;

    double compute_ratio() const;
    double step_ratio() const;      // fraction of interior bonds at chi_max
    double equivalent_chi() const;  // sqrt(avg(chi^2)) over interior bonds

    static BondSchedule full(const std::vector<std::size_t>& bond_dims, std::size_t chi_max);
};

// Bond-dimension cap used by generators: min(d^i, d^(M-i), chi_max).
std::vector<std::size_t> capped_bond_dims(std::size_t num_sites, std::size_t phys_dim,
                                          std::size_t chi_max);

struct RandomMpsOptions {
    // Damping applied to physical level k before orthonormalization; < 1
    // concentrates outcome weight on low occupation levels.
    double level_damping = 0.2;
    // Exponential decay rate of the lambda spectra.
    double lambda_decay = 0.8;
};

// Deterministic random state in the telescoping normal form: the sampler's
// chain-rule distribution coincides with |amplitude|^2 of the full
// contraction and the state vector has unit norm.
MpsState random_mps(std::size_t num_sites, std::size_t chi_max, std::size_t phys_dim,
                    std::uint64_t seed, const RandomMpsOptions& opts = {});

// chi=1 chain whose left environment magnitude decays by a fixed factor per
// site (10^-decay_rate_decades) with uniform outcome probabilities. Used to
// reproduce the reduced-precision underflow failure mode.
MpsState decay_chain(std::size_t num_sites, std::size_t phys_dim, double decay_rate_decades);

// Like decay_chain but outcome-dependent: choosing level 0 attenuates the
// sample by the factor while other levels keep magnitude 1. Spreads samples
// across many orders of magnitude, defeating a single global scale.
MpsState branching_decay_chain(std::size_t num_sites, double decay_rate_decades);

// Synthetic lambda spectra with entanglement entropy peaked at the chain
// center: spectrum at bond i decays as exp(-alpha_i * j) with alpha largest
// at the edges.
std::vector<std::vector<double>> synthetic_centered_spectra(std::size_t num_sites,
                                                            std::size_t chi_max,
                                                            double alpha_center, double alpha_edge,
                                                            std::uint64_t seed);

}  // namespace mpsamp
