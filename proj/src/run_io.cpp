#include "maskadv/run_io.hpp"

#include <sodium.h>

#include <chrono>
#include <ctime>

#include "maskadv/errors.hpp"
#include "maskadv/image_io.hpp"
#include "maskadv/model_io.hpp"

namespace maskadv {

namespace fs = std::filesystem;

std::string new_job_id() {
  if (sodium_init() < 0) throw Error("libsodium failed to initialise");
  unsigned char raw[6];
  randombytes_buf(raw, sizeof raw);
  char hex[2 * sizeof raw + 1];
  sodium_bin2hex(hex, sizeof hex, raw, sizeof raw);
  return hex;
}

std::string report_json_text(const AttackResult& result) {
  return make_report(result).dump(2) + "\n";
}

nlohmann::json timing_json(const AttackResult& result) {
  return {{"wall_ms", result.wall_ms}, {"deepfool_ms", result.deepfool_ms}, {"bb_ms", result.bb_ms}};
}

fs::path write_run(const fs::path& output_root, const std::string& job_id, const AttackResult& result,
                   const Tensor& x0, InputRange range) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &utc);
  const fs::path dir = output_root / (std::string(stamp) + "-" + job_id);
  fs::create_directories(dir);

  write_file(dir / "report.json", report_json_text(result));
  write_file(dir / "timing.json", timing_json(result).dump(2) + "\n");
  write_png(dir / "clean.png", tensor_to_image(x0, range));

  const Tensor& eps = result.initial_constraint.eps();
  const ImageDims dims = image_dims(eps.shape());
  Image8 mask{dims.height, dims.width, 1, std::vector<std::uint8_t>(dims.pixels(), 0)};
  for (std::size_t p = 0; p < dims.pixels(); ++p)
    for (std::size_t c = 0; c < dims.channels; ++c)
      if (eps[p * dims.channels + c] > 0.0) mask.data[p] = 255;
  write_png(dir / "mask.png", mask);

  if (result.success) {
    write_png(dir / "adversarial.png", tensor_to_image(*result.adversarial, range));
    write_png(dir / "delta.png", heat_map(*result.delta));
  }
  return dir;
}

RegionMask region_from_png(const std::vector<std::uint8_t>& bytes) {
  const Image8 img = decode_png(bytes);
  Tensor omega({img.height, img.width}, 0.0);
  for (std::size_t p = 0; p < img.height * img.width; ++p)
    for (std::size_t c = 0; c < img.channels; ++c)
      if (img.data[p * img.channels + c] != 0) omega[p] = 1.0;
  return RegionMask(std::move(omega));
}

RegionMask load_region_mask(const fs::path& path, std::size_t height, std::size_t width) {
  const auto bytes = read_file(path);
  RegionMask region = [&] {
    if (is_png(bytes)) return region_from_png(bytes);
    Tensor t = load_tensor(path);
    if (t.rank() == 3 && t.shape()[2] == 1) t = t.reshaped({t.shape()[0], t.shape()[1]});
    return RegionMask(std::move(t));
  }();
  if (region.height() != height || region.width() != width)
    throw InputError("mask " + path.string() + " is " + std::to_string(region.height()) + "x" +
                     std::to_string(region.width()) + " but the image is " + std::to_string(height) + "x" +
                     std::to_string(width));
  return region;
}

}  // namespace maskadv
