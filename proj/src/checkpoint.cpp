#include "lookupffn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace lffn {

namespace {

constexpr char kMagic[4] = {'L', 'F', 'F', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char bytes[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                            static_cast<unsigned char>(v >> 16),
                            static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

void put_u8(std::ostream& out, std::uint8_t v) { out.put(char(v)); }

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  return std::uint32_t(bytes[0]) | (std::uint32_t(bytes[1]) << 8) |
         (std::uint32_t(bytes[2]) << 16) | (std::uint32_t(bytes[3]) << 24);
}

std::uint8_t get_u8(std::istream& in) { return std::uint8_t(in.get()); }

double get_f64(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t(bytes[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointModel& model) {
  model.cfg.validate();
  const ProjectionSpec& ps = model.proj.spec();
  if (ps.d_in != model.cfg.d_in || ps.d_out != model.cfg.code_width())
    throw SizeError("checkpoint save: projection spec inconsistent with config");
  if (model.tables.tables != model.cfg.tables || model.tables.d_out != model.cfg.d_out)
    throw SizeError("checkpoint save: table stack inconsistent with config");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("checkpoint save: cannot open " + path);

  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, std::uint32_t(model.cfg.d_in));
  put_u32(out, std::uint32_t(model.cfg.d_out));
  put_u32(out, std::uint32_t(model.cfg.tables));
  put_u32(out, std::uint32_t(model.cfg.code_bits));
  put_u8(out, std::uint8_t(model.cfg.variant));
  put_u8(out, std::uint8_t(ps.kind));
  std::uint32_t m = 0, b = 0;
  if (ps.kind == ProjKind::bh) {
    m = std::uint32_t(ps.stages);
    b = std::uint32_t(ps.block);
  } else if (ps.kind == ProjKind::acdc) {
    m = std::uint32_t(ps.depth);
  }
  put_u32(out, m);
  put_u32(out, b);

  for (double v : model.proj.blob()) put_f64(out, v);
  for (double v : model.tables.data) put_f64(out, v);
  if (!out) throw UsageError("checkpoint save: write failed for " + path);
}

CheckpointModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("checkpoint load: cannot open " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw UsageError("checkpoint load: bad magic in " + path);
  const std::uint32_t version = get_u32(in);
  if (version != kVersion)
    throw UsageError("checkpoint load: unsupported version " + std::to_string(version));

  CheckpointModel model;
  model.cfg.d_in = get_u32(in);
  model.cfg.d_out = get_u32(in);
  model.cfg.tables = get_u32(in);
  model.cfg.code_bits = get_u32(in);
  const std::uint8_t variant = get_u8(in);
  if (variant > std::uint8_t(LookupVariant::gelu_tau1))
    throw UsageError("checkpoint load: bad variant byte");
  model.cfg.variant = LookupVariant(variant);
  const std::uint8_t kind = get_u8(in);
  if (kind > std::uint8_t(ProjKind::signflip))
    throw UsageError("checkpoint load: bad projection kind byte");
  const std::uint32_t m = get_u32(in);
  const std::uint32_t b = get_u32(in);
  model.cfg.validate();

  ProjectionSpec ps;
  ps.d_in = model.cfg.d_in;
  ps.d_out = model.cfg.code_width();
  ps.kind = ProjKind(kind);
  if (ps.kind == ProjKind::bh) {
    ps.stages = m;
    ps.block = b;
  } else if (ps.kind == ProjKind::acdc) {
    ps.depth = m;
  }
  ps.validate();

  // Blob lengths are implied by the header.
  const Projection shape_probe = Projection::init(ps, 0);
  std::vector<double> blob(shape_probe.blob_size());
  for (double& v : blob) v = get_f64(in);
  model.proj = Projection::from_blob(ps, std::move(blob));

  model.tables = HashTables::zeros_like(model.cfg);
  for (double& v : model.tables.data) v = get_f64(in);
  if (!in) throw UsageError("checkpoint load: truncated file " + path);
  in.peek();
  if (!in.eof()) throw UsageError("checkpoint load: trailing bytes in " + path);
  return model;
}

}  // namespace lffn
