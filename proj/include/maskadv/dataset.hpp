#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "maskadv/network.hpp"
#include "maskadv/tensor.hpp"

namespace maskadv {

/// Labelled 8-bit images held in memory. Images are converted to a model's
/// input range on access.
class Dataset {
 public:
  // IDX pair in the MNIST layout (magic 0x00000803 images, 0x00000801 labels).
  static Dataset from_idx(std::string name, const std::filesystem::path& images,
                          const std::filesystem::path& labels);
  // Directory of PNG files plus labels.json: {"file.png": label, ...} or
  // [{"file": "file.png", "label": label}, ...].
  static Dataset from_png_dir(std::string name, const std::filesystem::path& dir);

  /// Opens a PNG directory (has labels.json), a directory holding an IDX
  /// pair (t10k preferred over train), or an IDX prefix such as
  /// data/mnist/train.
  static Dataset open(const std::filesystem::path& path);

  const std::string& name() const noexcept { return name_; }
  std::size_t size() const noexcept { return labels_.size(); }
  const Shape& image_shape() const noexcept { return shape_; }
  std::size_t label(std::size_t i) const;
  Tensor image(std::size_t i, InputRange range) const;
  std::vector<std::uint8_t> raw(std::size_t i) const;

 private:
  std::string name_;
  Shape shape_;
  std::vector<std::uint8_t> pixels_;
  std::vector<std::size_t> labels_;
};

// Parses IDX bytes; `source` names the file in error messages.
struct IdxArray {
  std::vector<std::size_t> dims;
  std::vector<std::uint8_t> data;
};
IdxArray parse_idx(const std::vector<std::uint8_t>& bytes, std::uint32_t expected_magic, const std::string& source);

}  // namespace maskadv
