#include "maskadv/dataset.hpp"

#include <algorithm>

#include <json.hpp>

#include "maskadv/errors.hpp"
#include "maskadv/image_io.hpp"

namespace maskadv {

namespace fs = std::filesystem;

IdxArray parse_idx(const std::vector<std::uint8_t>& bytes, std::uint32_t expected_magic, const std::string& source) {
  auto be32 = [&](std::size_t off) {
    if (off + 4 > bytes.size()) throw IngestError(source + ": truncated header", bytes.size());
    return (std::uint32_t(bytes[off]) << 24) | (std::uint32_t(bytes[off + 1]) << 16) |
           (std::uint32_t(bytes[off + 2]) << 8) | std::uint32_t(bytes[off + 3]);
  };
  const std::uint32_t magic = be32(0);
  if (magic != expected_magic) {
    char buf[64];
    std::snprintf(buf, sizeof buf, ": bad magic 0x%08x, expected 0x%08x", magic, expected_magic);
    throw IngestError(source + buf, 0);
  }
  IdxArray out;
  const std::size_t ndims = magic & 0xff;
  std::size_t count = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    const std::size_t n = be32(4 + 4 * d);
    if (n == 0) throw IngestError(source + ": zero dimension", 4 + 4 * d);
    out.dims.push_back(n);
    count *= n;
  }
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() < header + count)
    throw IngestError(source + ": truncated data, expected " + std::to_string(count) + " bytes", bytes.size());
  if (bytes.size() > header + count) throw IngestError(source + ": trailing bytes", header + count);
  out.data.assign(bytes.begin() + std::ptrdiff_t(header), bytes.end());
  return out;
}

Dataset Dataset::from_idx(std::string name, const fs::path& images, const fs::path& labels) {
  const IdxArray img = parse_idx(read_file(images), 0x00000803, images.string());
  const IdxArray lab = parse_idx(read_file(labels), 0x00000801, labels.string());
  if (img.dims[0] != lab.dims[0])
    throw IngestError(labels.string() + ": " + std::to_string(lab.dims[0]) + " labels for " +
                          std::to_string(img.dims[0]) + " images",
                      4);
  Dataset ds;
  ds.name_ = std::move(name);
  ds.shape_ = {img.dims[1], img.dims[2], 1};
  ds.pixels_ = img.data;
  ds.labels_.assign(lab.data.begin(), lab.data.end());
  return ds;
}

Dataset Dataset::from_png_dir(std::string name, const fs::path& dir) {
  const fs::path labels_path = dir / "labels.json";
  const auto text = read_file(labels_path);
  const auto doc = nlohmann::json::parse(text.begin(), text.end(), nullptr, false);
  if (doc.is_discarded()) throw IngestError(labels_path.string() + ": malformed JSON", 0);

  std::vector<std::pair<std::string, std::size_t>> entries;
  auto add = [&](const std::string& file, const nlohmann::json& label) {
    if (!label.is_number_unsigned()) throw IngestError(labels_path.string() + ": label for " + file + " is not a non-negative integer", 0);
    entries.emplace_back(file, label.get<std::size_t>());
  };
  if (doc.is_object()) {
    for (const auto& [file, label] : doc.items()) add(file, label);
  } else if (doc.is_array()) {
    for (const auto& item : doc) {
      if (!item.is_object() || !item.contains("file") || !item.contains("label") || !item["file"].is_string())
        throw IngestError(labels_path.string() + ": entries need \"file\" and \"label\"", 0);
      add(item["file"].get<std::string>(), item["label"]);
    }
  } else {
    throw IngestError(labels_path.string() + ": expected an object or array", 0);
  }
  if (entries.empty()) throw IngestError(labels_path.string() + ": no images listed", 0);
  std::sort(entries.begin(), entries.end());

  Dataset ds;
  ds.name_ = std::move(name);
  for (const auto& [file, label] : entries) {
    const fs::path p = dir / file;
    Image8 img;
    try {
      img = decode_png(read_file(p));
    } catch (const InputError& e) {
      throw IngestError(p.string() + ": " + e.what(), 0);
    }
    const Shape shape{img.height, img.width, img.channels};
    if (ds.shape_.empty()) ds.shape_ = shape;
    if (shape != ds.shape_)
      throw IngestError(p.string() + ": shape " + shape_to_string(shape) + " differs from " +
                            shape_to_string(ds.shape_),
                        0);
    ds.pixels_.insert(ds.pixels_.end(), img.data.begin(), img.data.end());
    ds.labels_.push_back(label);
  }
  return ds;
}

Dataset Dataset::open(const fs::path& path) {
  auto idx_pair = [](const fs::path& prefix) {
    return std::pair{fs::path(prefix.string() + "-images-idx3-ubyte"), fs::path(prefix.string() + "-labels-idx1-ubyte")};
  };
  if (fs::is_directory(path)) {
    fs::path norm = fs::absolute(path).lexically_normal();
    if (norm.filename().empty()) norm = norm.parent_path();  // trailing slash
    const std::string name = norm.filename().string();
    if (fs::exists(path / "labels.json")) return from_png_dir(name, path);
    for (const char* split : {"t10k", "train"}) {
      auto [images, labels] = idx_pair(path / split);
      if (fs::exists(images) && fs::exists(labels)) return from_idx(name, images, labels);
    }
    throw InputError(path.string() + " holds neither labels.json nor an IDX image/label pair");
  }
  auto [images, labels] = idx_pair(path);
  if (fs::exists(images) && fs::exists(labels))
    return from_idx(path.parent_path().filename().string() + "-" + path.filename().string(), images, labels);
  throw InputError("dataset not found: " + path.string());
}

std::size_t Dataset::label(std::size_t i) const {
  if (i >= size()) throw InputError("image index " + std::to_string(i) + " out of range (" + std::to_string(size()) + " items)");
  return labels_[i];
}

std::vector<std::uint8_t> Dataset::raw(std::size_t i) const {
  label(i);
  const std::size_t n = shape_size(shape_);
  return {pixels_.begin() + std::ptrdiff_t(i * n), pixels_.begin() + std::ptrdiff_t((i + 1) * n)};
}

Tensor Dataset::image(std::size_t i, InputRange range) const {
  return image_to_tensor(Image8{shape_[0], shape_[1], shape_[2], raw(i)}, range);
}

}  // namespace maskadv
