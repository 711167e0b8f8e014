#include "mpsamp/precision.hpp"

#include <cmath>
#include <limits>

#include "mpsamp/errors.hpp"

namespace mpsamp {

namespace {

struct GridSpec {
    int mant_bits;    // explicit significand bits
    int emin_normal;  // smallest normal exponent (value range [2^emin, ...))
    int emax;         // largest normal exponent
};

// TF32 keeps the F32 exponent range with a 10-bit significand.
constexpr GridSpec kF32{23, -126, 127};
constexpr GridSpec kTF32{10, -126, 127};
constexpr GridSpec kF16{10, -14, 15};

double round_to_grid(double x, const GridSpec& g) {
    if (x == 0.0 || std::isnan(x) || std::isinf(x)) return x;
    const double sign = std::signbit(x) ? -1.0 : 1.0;
    const double ax = std::abs(x);

    int e;
    (void)std::frexp(ax, &e);      // ax = m * 2^e, m in [0.5, 1)
    const int exp_unbiased = e - 1;  // ax in [2^exp, 2^{exp+1})

    // Quantum of the destination grid at this magnitude; clamping the
    // exponent at emin_normal yields the subnormal grid.
    const int q_exp = (exp_unbiased > g.emin_normal ? exp_unbiased : g.emin_normal) - g.mant_bits;

    // Power-of-two scaling is exact; v stays far below 2^53.
    const double v = std::ldexp(ax, -q_exp);
    double n = std::floor(v);
    const double frac = v - n;
    if (frac > 0.5) {
        n += 1.0;
    } else if (frac == 0.5 && std::fmod(n, 2.0) != 0.0) {
        n += 1.0;  // ties to even
    }
    const double r = std::ldexp(n, q_exp);

    const double max_normal = std::ldexp(2.0 - std::ldexp(1.0, -g.mant_bits), g.emax);
    if (r > max_normal) return sign * std::numeric_limits<double>::infinity();
    return sign * r;
}

}  // namespace

const char* to_string(Precision p) {
    switch (p) {
        case Precision::F64: return "f64";
        case Precision::F32: return "f32";
        case Precision::TF32: return "tf32";
        case Precision::F16: return "f16";
    }
    return "?";
}

const char* to_string(ScalingMode m) {
    switch (m) {
        case ScalingMode::None: return "none";
        case ScalingMode::GlobalMax: return "global-max";
        case ScalingMode::PerSampleMax: return "per-sample-max";
    }
    return "?";
}

Precision precision_from_string(const std::string& s) {
    if (s == "f64") return Precision::F64;
    if (s == "f32") return Precision::F32;
    if (s == "tf32") return Precision::TF32;
    if (s == "f16") return Precision::F16;
    throw ConfigError("unknown precision tag: " + s);
}

ScalingMode scaling_from_string(const std::string& s) {
    if (s == "none") return ScalingMode::None;
    if (s == "global-max") return ScalingMode::GlobalMax;
    if (s == "per-sample-max") return ScalingMode::PerSampleMax;
    throw ConfigError("unknown scaling mode: " + s);
}

std::size_t storage_bytes_per_complex(Precision p) {
    switch (p) {
        case Precision::F64: return 16;
        case Precision::F32: return 8;
        case Precision::F16: return 4;
        case Precision::TF32: break;
    }
    throw ConfigError("tf32 is a compute format, not a storage format");
}

void PrecisionPolicy::validate() const {
    if (storage == Precision::TF32) {
        throw ConfigError("storage precision must be one of f64/f32/f16");
    }
}

double round_scalar(double x, Precision target) {
    switch (target) {
        case Precision::F64: return x;
        case Precision::F32: return round_to_grid(x, kF32);
        case Precision::TF32: return round_to_grid(x, kTF32);
        case Precision::F16: return round_to_grid(x, kF16);
    }
    return x;
}

ComplexTensor round_to(const ComplexTensor& t, Precision target) {
    ComplexTensor out = t;
    round_inplace(out, target);
    return out;
}

void round_inplace(ComplexTensor& t, Precision target) {
    if (target == Precision::F64) return;
    for (cdouble& v : t.values()) v = round_scalar(v, target);
}

ScaledBatch per_sample_max_scale(const ComplexTensor& env) {
    if (env.rank() < 2) throw DimensionError("per_sample_max_scale expects a batched tensor");
    ScaledBatch out;
    out.scaled = env;
    std::vector<std::uint8_t> alive(env.extent(0), 1);
    out.scales = scale_rows_inplace(out.scaled, ScalingMode::PerSampleMax, alive);
    out.row_alive = std::move(alive);
    return out;
}

ScaleVector scale_rows_inplace(ComplexTensor& env, ScalingMode mode, std::vector<std::uint8_t>& alive) {
    const std::size_t batch = env.extent(0);
    const std::size_t row = env.size() / (batch == 0 ? 1 : batch);
    ScaleVector scales;
    scales.factors.assign(batch, 1.0);
    if (mode == ScalingMode::None) return scales;

    cdouble* data = env.data();
    if (mode == ScalingMode::GlobalMax) {
        double m = 0.0;
        for (std::size_t i = 0; i < env.size(); ++i) m = std::max(m, component_mag(data[i]));
        if (m == 0.0) m = 1.0;
        for (std::size_t i = 0; i < env.size(); ++i) data[i] /= m;
        for (std::size_t n = 0; n < batch; ++n) scales.factors[n] = m;
        return scales;
    }

    for (std::size_t n = 0; n < batch; ++n) {
        if (!alive[n]) continue;
        cdouble* r = data + n * row;
        double m = 0.0;
        for (std::size_t i = 0; i < row; ++i) m = std::max(m, component_mag(r[i]));
        if (m == 0.0) {
            alive[n] = 0;  // dead row: underflowed to all zeros
            continue;
        }
        for (std::size_t i = 0; i < row; ++i) r[i] /= m;
        scales.factors[n] = m;
    }
    return scales;
}

}  // namespace mpsamp
