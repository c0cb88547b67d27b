#include "curvebench/directions.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "curvebench/io_util.hpp"

namespace curvebench {

namespace {
constexpr const char kMagic[] = "CBDIR1";
}

void DirectionSet::validate() const {
  if (basis.size() != scores.size()) {
    throw std::invalid_argument("direction set: " + std::to_string(basis.size()) +
                                " vectors vs " + std::to_string(scores.size()) + " scores");
  }
  for (const Tensor& v : basis) {
    if (v.shape() != shape) {
      throw std::invalid_argument("direction set: vector shape " + shape_str(v.shape()) +
                                  " vs declared " + shape_str(shape));
    }
    if (std::fabs(v.l2_norm() - 1.0) > 1e-10) {
      throw std::invalid_argument("direction set: non-unit basis vector");
    }
  }
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[i - 1] + 1e-12) {
      throw std::invalid_argument("direction set: scores not sorted descending");
    }
  }
}

void save_directions(const std::string& path, const DirectionSet& ds) {
  std::string out;
  out += kMagic;
  put_i32(out, ds.target_class);
  put_u32(out, static_cast<std::uint32_t>(ds.count()));
  put_u32(out, static_cast<std::uint32_t>(ds.shape.size()));
  for (std::size_t e : ds.shape) put_u32(out, static_cast<std::uint32_t>(e));
  for (double s : ds.scores) put_f64(out, s);
  for (const Tensor& v : ds.basis) {
    for (std::size_t i = 0; i < v.size(); ++i) put_f64(out, v[i]);
  }
  put_u32(out, static_cast<std::uint32_t>(ds.k_top));
  put_u32(out, static_cast<std::uint32_t>(ds.k_bottom));
  put_u32(out, static_cast<std::uint32_t>(ds.accept_count));
  put_u32(out, static_cast<std::uint32_t>(ds.skip_count));
  put_u32(out, static_cast<std::uint32_t>(ds.nonconverged_count));
  put_f64(out, ds.fd_step);
  put_u8(out, ds.partial ? 1 : 0);
  put_u32(out, static_cast<std::uint32_t>(ds.source.size()));
  out += ds.source;
  put_u32(out, static_cast<std::uint32_t>(ds.residuals.size()));
  for (double r : ds.residuals) put_f64(out, r);
  write_file(path, out);
  write_file(path + ".txt", direction_sidecar_text(ds));
}

DirectionSet load_directions(const std::string& path) {
  ByteReader r(read_file(path), path);
  r.expect_magic(kMagic, "directions");
  DirectionSet ds;
  ds.target_class = r.i32();
  const std::uint32_t count = r.u32();
  const std::uint32_t rank = r.u32();
  for (std::uint32_t i = 0; i < rank; ++i) ds.shape.push_back(r.u32());
  ds.scores.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) ds.scores[i] = r.f64();
  const std::size_t numel = shape_numel(ds.shape);
  ds.basis.reserve(count);
  for (std::uint32_t n = 0; n < count; ++n) {
    std::vector<double> data(numel);
    for (std::size_t i = 0; i < numel; ++i) data[i] = r.f64();
    ds.basis.push_back(Tensor::unchecked(ds.shape, std::move(data)));
  }
  ds.k_top = static_cast<int>(r.u32());
  ds.k_bottom = static_cast<int>(r.u32());
  ds.accept_count = r.u32();
  ds.skip_count = r.u32();
  ds.nonconverged_count = r.u32();
  ds.fd_step = r.f64();
  ds.partial = r.u8() != 0;
  const std::uint32_t src_len = r.u32();
  ds.source = r.bytes(src_len);
  const std::uint32_t res_count = r.u32();
  ds.residuals.resize(res_count);
  for (std::uint32_t i = 0; i < res_count; ++i) ds.residuals[i] = r.f64();
  return ds;
}

std::string direction_sidecar_text(const DirectionSet& ds) {
  std::ostringstream os;
  os << "target_class " << ds.target_class << "\n";
  os << "source " << ds.source << "\n";
  os << "directions " << ds.count() << "\n";
  os << "shape " << shape_str(ds.shape) << "\n";
  os << "k_top " << ds.k_top << "\n";
  os << "k_bottom " << ds.k_bottom << "\n";
  os << "boundary_points_accepted " << ds.accept_count << "\n";
  os << "boundary_points_skipped " << ds.skip_count << "\n";
  os << "boundary_points_nonconverged " << ds.nonconverged_count << "\n";
  os << "fd_step " << ds.fd_step << "\n";
  os << "partial " << (ds.partial ? 1 : 0) << "\n";
  if (!ds.scores.empty()) {
    os << "score_max " << ds.scores.front() << "\n";
    os << "score_min " << ds.scores.back() << "\n";
  }
  if (!ds.residuals.empty()) {
    double worst = 0.0;
    for (double r : ds.residuals) worst = std::max(worst, r);
    os << "residual_max " << worst << "\n";
  }
  return os.str();
}

}  // namespace curvebench
