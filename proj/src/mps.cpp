#include "mpsamp/mps.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mpsamp/errors.hpp"
#include "mpsamp/rng.hpp"

namespace mpsamp {

void MpsState::validate() const {
    if (num_sites == 0) throw DimensionError("mps has no sites");
    if (phys_dim < 1) throw DimensionError("mps physical dimension must be >= 1");
    if (bond_dims.size() != num_sites + 1) throw DimensionError("bond_dims length mismatch");
    if (bond_dims.front() != 1 || bond_dims.back() != 1) {
        throw DimensionError("boundary bonds must be 1");
    }
    if (gammas.size() != num_sites || lambdas.size() != num_sites) {
        throw DimensionError("site tensor count mismatch");
    }
    for (std::size_t i = 0; i < num_sites; ++i) {
        const ComplexTensor& g = gammas[i];
        if (g.rank() != 3 || g.extent(0) != bond_dims[i] || g.extent(1) != bond_dims[i + 1] ||
            g.extent(2) != phys_dim) {
            throw DimensionError("gamma shape disagrees with bond dimension chain");
        }
        if (lambdas[i].size() != bond_dims[i + 1]) {
            throw DimensionError("lambda length disagrees with bond dimension chain");
        }
        for (std::size_t j = 0; j < lambdas[i].size(); ++j) {
            if (lambdas[i][j] < 0.0) throw NumericError("lambda entries must be nonnegative");
            if (j > 0 && lambdas[i][j] > lambdas[i][j - 1]) {
                throw NumericError("lambda vectors must be nonincreasing");
            }
        }
    }
}

double BondSchedule::compute_ratio() const {
    const std::size_t sites = per_site_chi.size() - 1;
    double work = 0.0;
    for (std::size_t i = 0; i < sites; ++i) {
        work += static_cast<double>(per_site_chi[i]) * static_cast<double>(per_site_chi[i + 1]);
    }
    return work / (static_cast<double>(sites) * static_cast<double>(chi_max) *
                   static_cast<double>(chi_max));
}

double BondSchedule::step_ratio() const {
    const std::size_t bonds = per_site_chi.size();
    std::size_t full = 0, interior = 0;
    for (std::size_t i = 1; i + 1 < bonds; ++i) {
        ++interior;
        if (per_site_chi[i] == chi_max) ++full;
    }
    return interior == 0 ? 0.0 : static_cast<double>(full) / static_cast<double>(interior);
}

double BondSchedule::equivalent_chi() const {
    const std::size_t bonds = per_site_chi.size();
    double acc = 0.0;
    std::size_t interior = 0;
    for (std::size_t i = 1; i + 1 < bonds; ++i) {
        acc += static_cast<double>(per_site_chi[i]) * static_cast<double>(per_site_chi[i]);
        ++interior;
    }
    return interior == 0 ? 1.0 : std::sqrt(acc / static_cast<double>(interior));
}

BondSchedule BondSchedule::full(const std::vector<std::size_t>& bond_dims, std::size_t chi_max) {
    BondSchedule s;
    s.per_site_chi = bond_dims;
    s.chi_max = chi_max;
    return s;
}

std::vector<std::size_t> capped_bond_dims(std::size_t num_sites, std::size_t phys_dim,
                                          std::size_t chi_max) {
    std::vector<std::size_t> bd(num_sites + 1, 1);
    for (std::size_t i = 0; i <= num_sites; ++i) {
        double left = std::pow(static_cast<double>(phys_dim), static_cast<double>(i));
        double right = std::pow(static_cast<double>(phys_dim), static_cast<double>(num_sites - i));
        double cap = std::min({left, right, static_cast<double>(chi_max)});
        bd[i] = static_cast<std::size_t>(cap);
    }
    return bd;
}

namespace {

// Modified Gram-Schmidt with one reorthogonalization pass; rows of x become
// orthonormal. Rows must not exceed columns.
void orthonormalize_rows(std::vector<cdouble>& x, std::size_t rows, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) {
        cdouble* ri = x.data() + i * cols;
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t j = 0; j < i; ++j) {
                const cdouble* rj = x.data() + j * cols;
                cdouble dot{0.0, 0.0};
                for (std::size_t c = 0; c < cols; ++c) dot += std::conj(rj[c]) * ri[c];
                for (std::size_t c = 0; c < cols; ++c) ri[c] -= dot * rj[c];
            }
        }
        double norm2 = 0.0;
        for (std::size_t c = 0; c < cols; ++c) norm2 += std::norm(ri[c]);
        if (norm2 <= 0.0) throw NumericError("degenerate rows in orthonormalization");
        double inv = 1.0 / std::sqrt(norm2);
        for (std::size_t c = 0; c < cols; ++c) ri[c] *= inv;
    }
}

std::vector<double> random_lambda(std::mt19937_64& gen, std::size_t n, double decay) {
    std::uniform_real_distribution<double> jitter(0.0, 0.1);
    std::vector<double> lam(n);
    for (std::size_t j = 0; j < n; ++j) {
        lam[j] = std::exp(-decay * static_cast<double>(j)) * (1.0 + jitter(gen));
    }
    std::sort(lam.begin(), lam.end(), std::greater<double>());
    double norm2 = 0.0;
    for (double v : lam) norm2 += v * v;
    double inv = 1.0 / std::sqrt(norm2);
    for (double& v : lam) v *= inv;
    return lam;
}

}  // namespace

MpsState random_mps(std::size_t num_sites, std::size_t chi_max, std::size_t phys_dim,
                    std::uint64_t seed, const RandomMpsOptions& opts) {
    if (num_sites < 1) throw ConfigError("random_mps needs at least one site");
    if (phys_dim < 2) throw ConfigError("random_mps needs phys_dim >= 2");

    MpsState mps;
    mps.num_sites = num_sites;
    mps.phys_dim = phys_dim;
    mps.bond_dims = capped_bond_dims(num_sites, phys_dim, chi_max);

    std::mt19937_64 gen(rng::mix64(seed ^ 0x6d70735f67656eull));
    std::normal_distribution<double> gauss(0.0, 1.0);

    for (std::size_t i = 0; i < num_sites; ++i) {
        std::size_t n = mps.bond_dims[i + 1];
        mps.lambdas.push_back(i + 1 == num_sites ? std::vector<double>{1.0}
                                                 : random_lambda(gen, n, opts.lambda_decay));
    }

    // Telescoping construction: rows of H_i (chiL x chiR*d) are orthonormal
    // and gamma_i = diag(lambda_{i-1}) H_i diag(lambda_i)^-1, which makes the
    // chain-rule sampling distribution equal to |amplitude|^2 with unit norm.
    std::vector<double> lam_prev{1.0};
    for (std::size_t i = 0; i < num_sites; ++i) {
        const std::size_t chi_l = mps.bond_dims[i];
        const std::size_t chi_r = mps.bond_dims[i + 1];
        const std::size_t cols = chi_r * phys_dim;
        std::vector<cdouble> h(chi_l * cols);
        for (std::size_t l = 0; l < chi_l; ++l) {
            for (std::size_t r = 0; r < chi_r; ++r) {
                for (std::size_t k = 0; k < phys_dim; ++k) {
                    double damp = std::pow(opts.level_damping, static_cast<double>(k));
                    h[(l * chi_r + r) * phys_dim + k] = damp * cdouble(gauss(gen), gauss(gen));
                }
            }
        }
        orthonormalize_rows(h, chi_l, cols);

        const std::vector<double>& lam = mps.lambdas[i];
        ComplexTensor g({chi_l, chi_r, phys_dim});
        for (std::size_t l = 0; l < chi_l; ++l) {
            for (std::size_t r = 0; r < chi_r; ++r) {
                for (std::size_t k = 0; k < phys_dim; ++k) {
                    g.at3(l, r, k) = h[(l * chi_r + r) * phys_dim + k] * lam_prev[l] / lam[r];
                }
            }
        }
        mps.gammas.push_back(std::move(g));
        lam_prev = lam;
    }
    mps.validate();
    return mps;
}

MpsState decay_chain(std::size_t num_sites, std::size_t phys_dim, double decay_rate_decades) {
    MpsState mps;
    mps.num_sites = num_sites;
    mps.phys_dim = phys_dim;
    mps.bond_dims.assign(num_sites + 1, 1);
    const double factor = std::pow(10.0, -decay_rate_decades);
    for (std::size_t i = 0; i < num_sites; ++i) {
        ComplexTensor g({1, 1, phys_dim});
        for (std::size_t k = 0; k < phys_dim; ++k) g.at3(0, 0, k) = cdouble(factor, 0.0);
        mps.gammas.push_back(std::move(g));
        mps.lambdas.push_back({1.0});
    }
    return mps;
}

MpsState branching_decay_chain(std::size_t num_sites, double decay_rate_decades) {
    MpsState mps;
    mps.num_sites = num_sites;
    mps.phys_dim = 2;
    mps.bond_dims.assign(num_sites + 1, 1);
    const double factor = std::pow(10.0, -decay_rate_decades);
    for (std::size_t i = 0; i < num_sites; ++i) {
        ComplexTensor g({1, 1, 2});
        g.at3(0, 0, 0) = cdouble(factor, 0.0);
        g.at3(0, 0, 1) = cdouble(1.0, 0.0);
        mps.gammas.push_back(std::move(g));
        mps.lambdas.push_back({1.0});
    }
    return mps;
}

std::vector<std::vector<double>> synthetic_centered_spectra(std::size_t num_sites,
                                                            std::size_t chi_max,
                                                            double alpha_center, double alpha_edge,
                                                            std::uint64_t seed) {
    std::mt19937_64 gen(rng::mix64(seed ^ 0x7370656374726121ull));
    std::vector<std::vector<double>> spectra;
    const double mid = static_cast<double>(num_sites) / 2.0;
    for (std::size_t i = 0; i < num_sites; ++i) {
        double rel = mid == 0.0 ? 0.0 : std::abs((static_cast<double>(i) + 1.0) - mid) / mid;
        rel = std::min(rel, 1.0);
        double alpha = alpha_center + (alpha_edge - alpha_center) * rel;
        spectra.push_back(random_lambda(gen, chi_max, alpha));
    }
    return spectra;
}

}  // namespace mpsamp
