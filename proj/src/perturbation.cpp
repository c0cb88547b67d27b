#include "curvebench/perturbation.hpp"

#include <stdexcept>

#include "curvebench/io_util.hpp"

namespace curvebench {

namespace {
constexpr const char kMagic[] = "CBPRT1";
}

PerturbationRecord make_record(Tensor delta, int source_label, int end_label, int iterations,
                               std::string method, bool converged) {
  PerturbationRecord r;
  r.l2_norm = delta.l2_norm();
  r.delta = std::move(delta);
  r.source_label = source_label;
  r.end_label = end_label;
  r.iterations = iterations;
  r.method = std::move(method);
  r.converged = converged;
  return r;
}

void save_perturbations(const std::string& path, const std::vector<PerturbationRecord>& records) {
  if (records.empty()) throw std::invalid_argument("save_perturbations: empty record list");
  const Shape& shape = records.front().delta.shape();
  for (const PerturbationRecord& r : records) {
    if (r.delta.shape() != shape) {
      throw std::invalid_argument("save_perturbations: inconsistent delta shapes " +
                                  shape_str(shape) + " vs " + shape_str(r.delta.shape()));
    }
  }
  std::string out;
  out += kMagic;
  const std::string& method = records.front().method;
  put_u32(out, static_cast<std::uint32_t>(method.size()));
  out += method;
  put_u32(out, static_cast<std::uint32_t>(records.size()));
  put_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (std::size_t e : shape) put_u32(out, static_cast<std::uint32_t>(e));
  for (const PerturbationRecord& r : records) {
    for (std::size_t i = 0; i < r.delta.size(); ++i) put_f64(out, r.delta[i]);
    put_i32(out, r.source_label);
    put_i32(out, r.end_label);
    put_u32(out, static_cast<std::uint32_t>(r.iterations));
    put_f64(out, r.l2_norm);
    put_u8(out, r.converged ? 1 : 0);
  }
  write_file(path, out);
}

std::vector<PerturbationRecord> load_perturbations(const std::string& path) {
  ByteReader r(read_file(path), path);
  r.expect_magic(kMagic, "perturbations");
  const std::uint32_t method_len = r.u32();
  const std::string method = r.bytes(method_len);
  const std::uint32_t count = r.u32();
  const std::uint32_t rank = r.u32();
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(r.u32());
  const std::size_t numel = shape_numel(shape);
  std::vector<PerturbationRecord> records;
  records.reserve(count);
  for (std::uint32_t n = 0; n < count; ++n) {
    PerturbationRecord rec;
    std::vector<double> data(numel);
    for (std::size_t i = 0; i < numel; ++i) data[i] = r.f64();
    rec.delta = Tensor::unchecked(shape, std::move(data));
    rec.source_label = r.i32();
    rec.end_label = r.i32();
    rec.iterations = static_cast<int>(r.u32());
    rec.l2_norm = r.f64();
    rec.converged = r.u8() != 0;
    rec.method = method;
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace curvebench
