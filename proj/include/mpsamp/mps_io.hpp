#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mpsamp/mps.hpp"
#include "mpsamp/precision.hpp"

namespace mpsamp {

// On-disk layout (all scalars little-endian, see docs/formats.md):
//   magic "MPSB", u32 version, u64 M, u64 d,
//   u64 bond_dims[M+1],
//   u8 storage_tag[M],
//   u64 payload_offset[M], u64 payload_bytes[M], u64 checksum[M],
//   per-site payloads: gamma scalars at the storage precision, then the
//   lambda vector at f64. Lambda always stays full precision; only the gamma
//   payload honors the storage tag.
struct MpsFileInfo {
    std::uint32_t version = 0;
    std::size_t num_sites = 0;
    std::size_t phys_dim = 0;
    std::vector<std::size_t> bond_dims;
    std::vector<Precision> storage;
    std::vector<std::uint64_t> offsets;
    std::vector<std::uint64_t> payload_bytes;
    std::vector<std::uint64_t> checksums;
    std::uint64_t header_bytes = 0;

    std::uint64_t gamma_payload_bytes() const;
};

struct SiteData {
    std::size_t index = 0;
    ComplexTensor gamma;
    std::vector<double> lambda;
};

void save_mps(const MpsState& state, const std::string& path, Precision storage);
MpsFileInfo read_mps_info(const std::string& path);
MpsState load_mps(const std::string& path);

// Loads one site, verifying its checksum. Tensor-parallel workers use this
// for direct per-site access.
SiteData load_site(const std::string& path, std::size_t site);

// Raw payload access: the data-parallel root broadcasts these bytes verbatim,
// so wire volume tracks the storage precision (f16 halves it).
std::vector<std::uint8_t> read_site_payload(const std::string& path, const MpsFileInfo& info,
                                            std::size_t site);
SiteData decode_site_payload(const MpsFileInfo& info, std::size_t site,
                             const std::vector<std::uint8_t>& raw);

// Sequential site iterator with one background prefetch task; at most two
// site payloads are resident in the loader at any time.
class SiteStream {
  public:
    explicit SiteStream(std::string path,
                        std::chrono::milliseconds synthetic_read_delay = std::chrono::milliseconds(0));
    ~SiteStream();

    SiteStream(const SiteStream&) = delete;
    SiteStream& operator=(const SiteStream&) = delete;

    const MpsFileInfo& info() const { return info_; }

    // Yields sites 0..M-1 in order; returns false after the last site.
    // Checksum failures surface here as IoError naming the site.
    bool next(SiteData& out);

    std::uint64_t peak_resident_bytes() const;

  private:
    void prefetch_loop();

    std::string path_;
    MpsFileInfo info_;
    std::chrono::milliseconds delay_;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::optional<SiteData> slot_;
    std::exception_ptr error_;
    bool done_ = false;
    std::size_t consumed_ = 0;
    std::uint64_t resident_bytes_ = 0;
    std::uint64_t peak_resident_bytes_ = 0;

    std::thread worker_;
};

}  // namespace mpsamp
