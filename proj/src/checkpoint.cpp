#include "curvebench/checkpoint.hpp"

#include "curvebench/io_util.hpp"

namespace curvebench {

namespace {
constexpr const char kMagic[] = "CBNET1";
}

void save_checkpoint(const Model& model, const std::string& path) {
  std::string out;
  out += kMagic;
  const std::string desc = model.descriptor();
  put_u32(out, static_cast<std::uint32_t>(desc.size()));
  out += desc;
  for (const Tensor& p : model.params()) {
    for (std::size_t i = 0; i < p.size(); ++i) put_f64(out, p[i]);
  }
  write_file(path, out);
}

Model load_checkpoint(const std::string& path) {
  ByteReader r(read_file(path), path);
  r.expect_magic(kMagic, "checkpoint");
  const std::uint32_t desc_len = r.u32();
  if (desc_len > r.remaining()) {
    throw FormatError("checkpoint: descriptor length " + std::to_string(desc_len) +
                      " exceeds file size in " + path);
  }
  Model model = Model::from_descriptor(r.bytes(desc_len));
  std::size_t total = 0;
  for (const Tensor& p : model.params()) total += p.size();
  if (r.remaining() != total * 8) {
    throw FormatError("checkpoint: payload length mismatch in " + path + " (descriptor implies " +
                      std::to_string(total * 8) + " bytes, found " +
                      std::to_string(r.remaining()) + ")");
  }
  for (Tensor& p : model.params()) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = r.f64();
  }
  return model;
}

}  // namespace curvebench
