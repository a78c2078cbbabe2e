#pragma once

// IDX container reader (the MNIST distribution format). Headers are
// big-endian: a 4-byte magic (0x00000803 for 3-d ubyte image stacks,
// 0x00000801 for 1-d ubyte label vectors) followed by one 4-byte size per
// dimension. Gzip-compressed files are read transparently.

#include <zlib.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "clreg/data.hpp"
#include "clreg/error.hpp"

namespace clreg {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

enum class IdxErrorKind { open_failed, bad_magic, truncated, count_mismatch };

struct IdxError : IoError {
  IdxError(IdxErrorKind k, const std::string& what) : IoError(what), kind(k) {}
  IdxErrorKind kind;
};

namespace detail {

class GzFile {
 public:
  explicit GzFile(const std::filesystem::path& path) : path_(path.string()) {
    file_ = gzopen(path_.c_str(), "rb");
    if (file_ == nullptr) throw IdxError(IdxErrorKind::open_failed, "cannot open " + path_);
  }
  GzFile(const GzFile&) = delete;
  GzFile& operator=(const GzFile&) = delete;
  ~GzFile() { gzclose(file_); }

  void read_exact(void* dst, std::size_t n, const char* what) {
    auto* out = static_cast<unsigned char*>(dst);
    while (n > 0) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
      const int got = gzread(file_, out, chunk);
      if (got <= 0) throw IdxError(IdxErrorKind::truncated, path_ + ": truncated while reading " + what);
      out += got;
      n -= static_cast<std::size_t>(got);
    }
  }

  std::uint32_t read_be32(const char* what) {
    std::array<unsigned char, 4> b{};
    read_exact(b.data(), 4, what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | b[3];
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  gzFile file_ = nullptr;
};

inline std::filesystem::path with_gz_fallback(const std::filesystem::path& p) {
  if (std::filesystem::exists(p)) return p;
  auto gz = p;
  gz += ".gz";
  if (std::filesystem::exists(gz)) return gz;
  return p;
}

}  // namespace detail

/// Reads an image/label file pair; pixels are divided by 255.
inline LabeledSet load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  detail::GzFile images(images_path);
  detail::GzFile labels(labels_path);

  const auto im_magic = images.read_be32("magic");
  if (im_magic != kIdxImagesMagic) {
    throw IdxError(IdxErrorKind::bad_magic, images.path() + ": bad image magic " + std::to_string(im_magic));
  }
  const auto lb_magic = labels.read_be32("magic");
  if (lb_magic != kIdxLabelsMagic) {
    throw IdxError(IdxErrorKind::bad_magic, labels.path() + ": bad label magic " + std::to_string(lb_magic));
  }
  const std::size_t n_images = images.read_be32("image count");
  const std::size_t rows = images.read_be32("row count");
  const std::size_t cols = images.read_be32("column count");
  const std::size_t n_labels = labels.read_be32("label count");
  if (n_images != n_labels) {
    throw IdxError(IdxErrorKind::count_mismatch, "image count " + std::to_string(n_images) +
                                                     " does not match label count " + std::to_string(n_labels));
  }

  const std::size_t dim = rows * cols;
  std::vector<unsigned char> pixels(n_images * dim);
  images.read_exact(pixels.data(), pixels.size(), "pixels");
  std::vector<unsigned char> raw_labels(n_labels);
  labels.read_exact(raw_labels.data(), raw_labels.size(), "labels");

  LabeledSet out;
  out.inputs.resize(Eigen::Index(n_images), Eigen::Index(dim));
  for (std::size_t i = 0; i < pixels.size(); ++i) out.inputs.data()[i] = double(pixels[i]) / 255.0;
  out.labels.assign(raw_labels.begin(), raw_labels.end());
  return out;
}

/// Loads the four standard MNIST files from `dir` (plain or .gz).
inline Dataset load_mnist(const std::filesystem::path& dir) {
  Dataset d;
  d.name = "mnist";
  d.train = load_idx(detail::with_gz_fallback(dir / "train-images-idx3-ubyte"),
                     detail::with_gz_fallback(dir / "train-labels-idx1-ubyte"));
  d.test = load_idx(detail::with_gz_fallback(dir / "t10k-images-idx3-ubyte"),
                    detail::with_gz_fallback(dir / "t10k-labels-idx1-ubyte"));
  int max_label = 0;
  for (int y : d.train.labels) max_label = std::max(max_label, y);
  d.n_classes = static_cast<std::size_t>(max_label) + 1;
  return d;
}

}  // namespace clreg
