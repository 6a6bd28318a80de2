#include "seqpen/idx.hpp"

#include <zlib.h>

#include <cstdio>
#include <fstream>
#include <memory>

namespace seqpen {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (static_cast<std::uint32_t>(b[at]) << 24) | (static_cast<std::uint32_t>(b[at + 1]) << 16) |
         (static_cast<std::uint32_t>(b[at + 2]) << 8) | static_cast<std::uint32_t>(b[at + 3]);
}

void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

struct GzCloser {
  void operator()(gzFile f) const { gzclose(f); }
};
using GzHandle = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

IdxHeader expect_header(std::span<const std::uint8_t> bytes, std::uint32_t magic,
                        const std::string& path) {
  if (bytes.size() < 4) {
    throw IdxError(IdxErrorCode::truncated, path + ": file shorter than an IDX magic number");
  }
  const std::uint32_t found = read_be32(bytes, 0);
  if (found != magic) {
    char buf[96];
    std::snprintf(buf, sizeof buf, ": bad magic number 0x%08x (expected 0x%08x)", found, magic);
    throw IdxError(IdxErrorCode::bad_magic, path + buf);
  }
  IdxHeader h = parse_idx_header(bytes);
  if (bytes.size() < h.header_bytes() + h.payload_elements()) {
    throw IdxError(IdxErrorCode::truncated,
                   path + ": payload holds " + std::to_string(bytes.size() - h.header_bytes()) +
                       " bytes, header announces " + std::to_string(h.payload_elements()));
  }
  return h;
}

}  // namespace

std::size_t IdxHeader::payload_elements() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

IdxHeader parse_idx_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw IdxError(IdxErrorCode::truncated, "IDX header: fewer than 4 bytes");
  if (bytes[0] != 0 || bytes[1] != 0) {
    throw IdxError(IdxErrorCode::bad_magic, "IDX header: magic must start with two zero bytes");
  }
  IdxHeader h;
  h.type_code = bytes[2];
  const std::size_t ndims = bytes[3];
  if (bytes.size() < 4 + 4 * ndims) {
    throw IdxError(IdxErrorCode::truncated, "IDX header: dimension list is truncated");
  }
  for (std::size_t d = 0; d < ndims; ++d) h.dims.push_back(read_be32(bytes, 4 + 4 * d));
  return h;
}

std::vector<std::uint8_t> serialize_idx_header(const IdxHeader& header) {
  std::vector<std::uint8_t> out;
  append_be32(out, header.magic());
  for (auto d : header.dims) append_be32(out, d);
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  // gzread passes plain files through unchanged and inflates gzip ones.
  GzHandle f(gzopen(path.c_str(), "rb"));
  if (!f) throw IdxError(IdxErrorCode::io_error, path + ": cannot open");
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  for (;;) {
    const int got = gzread(f.get(), buf, sizeof buf);
    if (got < 0) {
      int err = 0;
      throw IdxError(IdxErrorCode::io_error, path + ": " + gzerror(f.get(), &err));
    }
    if (got == 0) break;
    out.insert(out.end(), buf, buf + got);
  }
  return out;
}

void write_idx_file(const std::string& path, const IdxHeader& header,
                    std::span<const std::uint8_t> payload, bool compress) {
  std::vector<std::uint8_t> bytes = serialize_idx_header(header);
  bytes.insert(bytes.end(), payload.begin(), payload.end());
  if (compress) {
    GzHandle f(gzopen(path.c_str(), "wb"));
    if (!f || gzwrite(f.get(), bytes.data(), static_cast<unsigned>(bytes.size())) !=
                  static_cast<int>(bytes.size())) {
      throw IdxError(IdxErrorCode::io_error, path + ": write failed");
    }
    return;
  }
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IdxError(IdxErrorCode::io_error, path + ": write failed");
}

ImageDataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                              std::optional<Index> limit, Split split) {
  const std::vector<std::uint8_t> img = read_file_bytes(images_path);
  const std::vector<std::uint8_t> lab = read_file_bytes(labels_path);
  const IdxHeader ih = expect_header(img, kIdxImagesMagic, images_path);
  const IdxHeader lh = expect_header(lab, kIdxLabelsMagic, labels_path);
  if (ih.dims[1] == 0 || ih.dims[2] == 0) {
    throw IdxError(IdxErrorCode::bad_dimensions, images_path + ": zero-sized images");
  }
  if (ih.dims[0] != lh.dims[0]) {
    throw IdxError(IdxErrorCode::count_mismatch,
                   "image count " + std::to_string(ih.dims[0]) + " in " + images_path +
                       " differs from label count " + std::to_string(lh.dims[0]) + " in " +
                       labels_path);
  }
  Index count = ih.dims[0];
  if (limit) {
    if (*limit < 1) throw std::invalid_argument("load_idx_dataset: limit must be positive");
    count = std::min(count, *limit);
  }

  ImageDataset ds;
  ds.rows = ih.dims[1];
  ds.cols = ih.dims[2];
  ds.split = split;
  const Index pixels = ds.rows * ds.cols;
  ds.images.resize(pixels, count);
  const std::uint8_t* src = img.data() + ih.header_bytes();
  for (Index j = 0; j < count; ++j) {
    for (Index p = 0; p < pixels; ++p) {
      ds.images(p, j) = static_cast<float>(src[j * pixels + p]) / 255.0f;
    }
  }
  const std::uint8_t* lsrc = lab.data() + lh.header_bytes();
  ds.labels.assign(lsrc, lsrc + count);
  for (auto l : ds.labels) {
    if (l > 9) {
      throw IdxError(IdxErrorCode::bad_dimensions,
                     labels_path + ": label " + std::to_string(l) + " outside [0, 10)");
    }
  }
  return ds;
}

}  // namespace seqpen
