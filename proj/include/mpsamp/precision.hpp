#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mpsamp/tensor.hpp"

namespace mpsamp {

// Reduced-precision arithmetic is emulated in software: values are rounded
// onto the target representation's grid (round-to-nearest-even, IEEE
// overflow/subnormal semantics) while the containers stay double.
enum class Precision : std::uint8_t { F64 = 0, F32 = 1, TF32 = 2, F16 = 3 };

enum class ScalingMode : std::uint8_t { None = 0, GlobalMax = 1, PerSampleMax = 2 };

const char* to_string(Precision p);
const char* to_string(ScalingMode m);
Precision precision_from_string(const std::string& s);
ScalingMode scaling_from_string(const std::string& s);

// Bytes used when a complex value of this precision is serialized.
std::size_t storage_bytes_per_complex(Precision p);

struct PrecisionPolicy {
    Precision compute = Precision::F64;
    Precision storage = Precision::F64;
    ScalingMode scaling = ScalingMode::None;

    void validate() const;
};

// Round a double to the grid of `target`. Total: NaN/inf pass through,
// overflow saturates to infinity, underflow follows the target's subnormal
// rules (flush below half the smallest subnormal).
double round_scalar(double x, Precision target);

inline cdouble round_scalar(cdouble v, Precision target) {
    return {round_scalar(v.real(), target), round_scalar(v.imag(), target)};
}

ComplexTensor round_to(const ComplexTensor& t, Precision target);
void round_inplace(ComplexTensor& t, Precision target);

// Per-sample positive scale factors, one per batch row.
struct ScaleVector {
    std::vector<double> factors;
};

struct ScaledBatch {
    ComplexTensor scaled;
    ScaleVector scales;
    std::vector<std::uint8_t> row_alive;  // 0 for all-zero (dead) rows
};

// Scales each batch row (first axis) by its max(|Re|,|Im|) component so every
// surviving entry has magnitude components <= 1. All-zero rows get scale 1 and
// are flagged dead rather than resampled.
ScaledBatch per_sample_max_scale(const ComplexTensor& env);

// In-place variant used by the sampling loop; `alive` rows already marked dead
// are left untouched. Returns the applied scale factors.
ScaleVector scale_rows_inplace(ComplexTensor& env, ScalingMode mode, std::vector<std::uint8_t>& alive);

}  // namespace mpsamp
