#include "mpsamp/mps_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "mpsamp/errors.hpp"

namespace mpsamp {

namespace {

constexpr char kMagic[4] = {'M', 'P', 'S', 'B'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(const std::uint8_t* p, std::size_t n) {
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

std::uint16_t half_bits_from_double(double x) {
    // x is expected to be on the f16 grid already (round_scalar(., F16)).
    std::uint16_t sign = std::signbit(x) ? 0x8000u : 0u;
    if (x == 0.0) return sign;
    if (std::isnan(x)) return 0x7E00u;
    double ax = std::abs(x);
    if (std::isinf(x) || ax > 65504.0) return sign | 0x7C00u;
    int e;
    (void)std::frexp(ax, &e);
    int exp = e - 1;  // ax in [2^exp, 2^{exp+1})
    if (exp < -14) {
        // subnormal: stored as integer multiple of 2^-24
        auto mant = static_cast<std::uint16_t>(std::ldexp(ax, 24));
        return sign | mant;
    }
    auto mant = static_cast<std::uint16_t>(std::ldexp(ax, 10 - exp) - 1024.0);
    auto biased = static_cast<std::uint16_t>(exp + 15);
    return static_cast<std::uint16_t>(sign | (biased << 10) | mant);
}

double double_from_half_bits(std::uint16_t h) {
    double sign = (h & 0x8000u) ? -1.0 : 1.0;
    int exp = (h >> 10) & 0x1F;
    int mant = h & 0x3FF;
    if (exp == 0x1F) {
        return mant ? std::numeric_limits<double>::quiet_NaN()
                    : sign * std::numeric_limits<double>::infinity();
    }
    if (exp == 0) return sign * std::ldexp(static_cast<double>(mant), -24);
    return sign * std::ldexp(static_cast<double>(mant) + 1024.0, exp - 15 - 10);
}

void append_scalar(std::vector<std::uint8_t>& buf, double x, Precision p) {
    switch (p) {
        case Precision::F64: {
            put_u64(buf, std::bit_cast<std::uint64_t>(x));
            return;
        }
        case Precision::F32: {
            float f = static_cast<float>(round_scalar(x, Precision::F32));
            put_u32(buf, std::bit_cast<std::uint32_t>(f));
            return;
        }
        case Precision::F16: {
            std::uint16_t h = half_bits_from_double(round_scalar(x, Precision::F16));
            buf.push_back(static_cast<std::uint8_t>(h & 0xFF));
            buf.push_back(static_cast<std::uint8_t>(h >> 8));
            return;
        }
        case Precision::TF32: break;
    }
    throw ConfigError("unsupported storage precision");
}

double read_scalar(const std::uint8_t* p, Precision prec) {
    switch (prec) {
        case Precision::F64: return std::bit_cast<double>(get_u64(p));
        case Precision::F32: return static_cast<double>(std::bit_cast<float>(get_u32(p)));
        case Precision::F16: {
            std::uint16_t h = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
            return double_from_half_bits(h);
        }
        case Precision::TF32: break;
    }
    throw ConfigError("unsupported storage precision");
}

std::uint64_t site_payload_bytes(const MpsFileInfo& info, std::size_t i) {
    std::uint64_t gamma_scalars = 2ull * info.bond_dims[i] * info.bond_dims[i + 1] * info.phys_dim;
    std::uint64_t per = storage_bytes_per_complex(info.storage[i]) / 2;
    return gamma_scalars * per + 8ull * info.bond_dims[i + 1];
}

SiteData decode_site(const MpsFileInfo& info, std::size_t i, const std::vector<std::uint8_t>& raw) {
    if (fnv1a(raw.data(), raw.size()) != info.checksums[i]) {
        throw IoError("mps file corrupt: checksum mismatch at site " + std::to_string(i));
    }
    SiteData site;
    site.index = i;
    const std::size_t chi_l = info.bond_dims[i];
    const std::size_t chi_r = info.bond_dims[i + 1];
    const std::size_t d = info.phys_dim;
    site.gamma = ComplexTensor({chi_l, chi_r, d});
    const Precision prec = info.storage[i];
    const std::size_t sb = storage_bytes_per_complex(prec) / 2;
    const std::uint8_t* p = raw.data();
    for (std::size_t j = 0; j < site.gamma.size(); ++j) {
        double re = read_scalar(p, prec);
        p += sb;
        double im = read_scalar(p, prec);
        p += sb;
        site.gamma[j] = cdouble(re, im);
    }
    site.lambda.resize(chi_r);
    for (std::size_t j = 0; j < chi_r; ++j) {
        site.lambda[j] = std::bit_cast<double>(get_u64(p));
        p += 8;
    }
    return site;
}

std::vector<std::uint8_t> read_range(std::ifstream& f, std::uint64_t offset, std::uint64_t bytes) {
    std::vector<std::uint8_t> raw(bytes);
    f.seekg(static_cast<std::streamoff>(offset));
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
    if (!f) throw IoError("mps file truncated");
    return raw;
}

}  // namespace

std::uint64_t MpsFileInfo::gamma_payload_bytes() const {
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < num_sites; ++i) {
        total += 2ull * bond_dims[i] * bond_dims[i + 1] * phys_dim *
                 (storage_bytes_per_complex(storage[i]) / 2);
    }
    return total;
}

void save_mps(const MpsState& state, const std::string& path, Precision storage) {
    state.validate();
    if (storage == Precision::TF32) throw ConfigError("tf32 is not a storage precision");

    const std::size_t m = state.num_sites;
    std::vector<std::vector<std::uint8_t>> payloads(m);
    std::vector<std::uint64_t> checksums(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<std::uint8_t>& buf = payloads[i];
        for (const cdouble& v : state.gammas[i].values()) {
            append_scalar(buf, v.real(), storage);
            append_scalar(buf, v.imag(), storage);
        }
        for (double l : state.lambdas[i]) {
            put_u64(buf, std::bit_cast<std::uint64_t>(l));
        }
        checksums[i] = fnv1a(buf.data(), buf.size());
    }

    std::vector<std::uint8_t> header;
    header.insert(header.end(), kMagic, kMagic + 4);
    put_u32(header, kVersion);
    put_u64(header, m);
    put_u64(header, state.phys_dim);
    for (std::size_t b : state.bond_dims) put_u64(header, b);
    for (std::size_t i = 0; i < m; ++i) header.push_back(static_cast<std::uint8_t>(storage));
    const std::uint64_t header_bytes = header.size() + 24ull * m;
    std::uint64_t offset = header_bytes;
    for (std::size_t i = 0; i < m; ++i) {
        put_u64(header, offset);
        offset += payloads[i].size();
    }
    for (std::size_t i = 0; i < m; ++i) put_u64(header, payloads[i].size());
    for (std::size_t i = 0; i < m; ++i) put_u64(header, checksums[i]);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
    for (std::size_t i = 0; i < m; ++i) {
        f.write(reinterpret_cast<const char*>(payloads[i].data()),
                static_cast<std::streamsize>(payloads[i].size()));
    }
    if (!f) throw IoError("write failed: " + path);
}

MpsFileInfo read_mps_info(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);

    std::uint8_t fixed[24];
    f.read(reinterpret_cast<char*>(fixed), sizeof(fixed));
    if (!f || std::memcmp(fixed, kMagic, 4) != 0) throw IoError("not an mps file: " + path);

    MpsFileInfo info;
    info.version = get_u32(fixed + 4);
    if (info.version != kVersion) throw IoError("unsupported mps file version");
    info.num_sites = get_u64(fixed + 8);
    info.phys_dim = get_u64(fixed + 16);
    const std::size_t m = info.num_sites;
    if (m == 0 || m > (1u << 24)) throw IoError("implausible site count in mps file");

    std::vector<std::uint8_t> rest(8 * (m + 1) + m + 24 * m);
    f.read(reinterpret_cast<char*>(rest.data()), static_cast<std::streamsize>(rest.size()));
    if (!f) throw IoError("mps header truncated");

    const std::uint8_t* p = rest.data();
    info.bond_dims.resize(m + 1);
    for (std::size_t i = 0; i <= m; ++i, p += 8) info.bond_dims[i] = get_u64(p);
    info.storage.resize(m);
    for (std::size_t i = 0; i < m; ++i, ++p) info.storage[i] = static_cast<Precision>(*p);
    info.offsets.resize(m);
    for (std::size_t i = 0; i < m; ++i, p += 8) info.offsets[i] = get_u64(p);
    info.payload_bytes.resize(m);
    for (std::size_t i = 0; i < m; ++i, p += 8) info.payload_bytes[i] = get_u64(p);
    info.checksums.resize(m);
    for (std::size_t i = 0; i < m; ++i, p += 8) info.checksums[i] = get_u64(p);
    info.header_bytes = 24 + rest.size();

    std::uint64_t prev = 0;
    for (std::size_t i = 0; i < m; ++i) {
        if (info.offsets[i] <= prev) throw IoError("mps header offsets not strictly increasing");
        if (info.payload_bytes[i] != site_payload_bytes(info, i)) {
            throw IoError("mps header payload size mismatch at site " + std::to_string(i));
        }
        prev = info.offsets[i];
    }
    return info;
}

SiteData load_site(const std::string& path, std::size_t site) {
    MpsFileInfo info = read_mps_info(path);
    if (site >= info.num_sites) throw IoError("site index out of range");
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    return decode_site(info, site, read_range(f, info.offsets[site], info.payload_bytes[site]));
}

std::vector<std::uint8_t> read_site_payload(const std::string& path, const MpsFileInfo& info,
                                            std::size_t site) {
    if (site >= info.num_sites) throw IoError("site index out of range");
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    return read_range(f, info.offsets[site], info.payload_bytes[site]);
}

SiteData decode_site_payload(const MpsFileInfo& info, std::size_t site,
                             const std::vector<std::uint8_t>& raw) {
    return decode_site(info, site, raw);
}

MpsState load_mps(const std::string& path) {
    MpsFileInfo info = read_mps_info(path);
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);

    MpsState state;
    state.num_sites = info.num_sites;
    state.phys_dim = info.phys_dim;
    state.bond_dims = info.bond_dims;
    for (std::size_t i = 0; i < info.num_sites; ++i) {
        SiteData site = decode_site(info, i, read_range(f, info.offsets[i], info.payload_bytes[i]));
        state.gammas.push_back(std::move(site.gamma));
        state.lambdas.push_back(std::move(site.lambda));
    }
    return state;
}

SiteStream::SiteStream(std::string path, std::chrono::milliseconds synthetic_read_delay)
    : path_(std::move(path)), info_(read_mps_info(path_)), delay_(synthetic_read_delay) {
    worker_ = std::thread([this] { prefetch_loop(); });
}

SiteStream::~SiteStream() {
    {
        std::lock_guard<std::mutex> lock(mu_);
        done_ = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
}

void SiteStream::prefetch_loop() {
    try {
        std::ifstream f(path_, std::ios::binary);
        if (!f) throw IoError("cannot open: " + path_);
        for (std::size_t i = 0; i < info_.num_sites; ++i) {
            {
                std::lock_guard<std::mutex> lock(mu_);
                resident_bytes_ += info_.payload_bytes[i];
                peak_resident_bytes_ = std::max(peak_resident_bytes_, resident_bytes_);
            }
            if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
            SiteData site = decode_site(info_, i, read_range(f, info_.offsets[i], info_.payload_bytes[i]));

            std::unique_lock<std::mutex> lock(mu_);
            cv_.wait(lock, [this] { return !slot_.has_value() || done_; });
            if (done_) return;
            slot_ = std::move(site);
            cv_.notify_all();
        }
    } catch (...) {
        std::lock_guard<std::mutex> lock(mu_);
        error_ = std::current_exception();
        cv_.notify_all();
    }
}

bool SiteStream::next(SiteData& out) {
    std::unique_lock<std::mutex> lock(mu_);
    if (consumed_ == info_.num_sites) return false;
    cv_.wait(lock, [this] { return slot_.has_value() || error_; });
    if (error_ && !slot_.has_value()) std::rethrow_exception(error_);
    out = std::move(*slot_);
    slot_.reset();
    resident_bytes_ -= info_.payload_bytes[out.index];
    ++consumed_;
    cv_.notify_all();
    return true;
}

std::uint64_t SiteStream::peak_resident_bytes() const {
    std::lock_guard<std::mutex> lock(mu_);
    return peak_resident_bytes_;
}

}  // namespace mpsamp
