#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace seqpen {

using Index = Eigen::Index;

enum class IdxErrorCode { io_error, bad_magic, truncated, count_mismatch, bad_dimensions };

class IdxError : public std::runtime_error {
 public:
  IdxError(IdxErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  IdxErrorCode code() const { return code_; }

 private:
  IdxErrorCode code_;
};

/// Header of an IDX file: magic 0x0000TTDD (type code TT, DD dimensions)
/// followed by DD big-endian 32-bit sizes.
struct IdxHeader {
  std::uint8_t type_code = 0x08;
  std::vector<std::uint32_t> dims;

  std::uint32_t magic() const {
    return (static_cast<std::uint32_t>(type_code) << 8) | static_cast<std::uint32_t>(dims.size());
  }
  std::size_t header_bytes() const { return 4 + 4 * dims.size(); }
  std::size_t payload_elements() const;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Parses the header at the start of `bytes`.
IdxHeader parse_idx_header(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_idx_header(const IdxHeader& header);

/// Whole file contents, gunzipped when the file starts with 0x1f 0x8b.
std::vector<std::uint8_t> read_file_bytes(const std::string& path);

/// Writes header + payload, gzip-compressed when `compress` is set.
void write_idx_file(const std::string& path, const IdxHeader& header,
                    std::span<const std::uint8_t> payload, bool compress = false);

enum class Split { train, test };

/// Grayscale images with one column per sample, pixel values in [0, 1].
struct ImageDataset {
  Eigen::MatrixXf images;
  std::vector<std::uint8_t> labels;
  Index rows = 28;
  Index cols = 28;
  Split split = Split::train;

  Index size() const { return images.cols(); }
  Index pixels() const { return images.rows(); }
};

/// Loads an images/labels pair in IDX format (magic 0x803 / 0x801). Pixels
/// are scaled by 1/255; `limit` keeps only the first samples.
ImageDataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                              std::optional<Index> limit = std::nullopt,
                              Split split = Split::train);

}  // namespace seqpen
