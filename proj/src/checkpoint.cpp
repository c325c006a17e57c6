#include "sketchmatch/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace sketchmatch {

namespace {

constexpr char kMagic[8] = {'S', 'M', 'C', 'K', 'P', 'T', '0', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  const std::uint64_t bits = get_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string shape_manifest_str(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out.empty() ? "1" : out;
}

}  // namespace

void save_checkpoint(const ParamStore& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "checkpoint: cannot open '" + path + "' for writing");
  os.write(kMagic, 8);
  put_u64(os, params.items().size());
  for (const auto& [name, t] : params.items()) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<std::uint32_t>(t.shape().size()));
    for (std::size_t e : t.shape()) put_u64(os, e);
    for (real v : t.value()) put_f64(os, static_cast<double>(v));
  }
  require(os.good(), "checkpoint: write failed for '" + path + "'");
  os.close();

  std::ofstream manifest(path + ".manifest");
  require(manifest.good(), "checkpoint: cannot open '" + path + ".manifest'");
  manifest << "# sketchmatch-checkpoint-manifest v1\n";
  for (const auto& [name, t] : params.items())
    manifest << name << "\t" << shape_manifest_str(t.shape()) << "\n";
}

void load_checkpoint(ParamStore& params, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "checkpoint: cannot open '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  require(is.good() && std::memcmp(magic, kMagic, 8) == 0,
          "checkpoint: '" + path + "' is not a sketchmatch checkpoint");
  const std::uint64_t count = get_u64(is);
  require(count == params.items().size(),
          "checkpoint: '" + path + "' holds " + std::to_string(count) +
              " arrays, model expects " + std::to_string(params.items().size()));
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    require(params.has(name), "checkpoint: unknown array '" + name + "'");
    Tensor t = params.get(name);
    const std::uint32_t ndim = get_u32(is);
    Shape shape(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d) shape[d] = get_u64(is);
    require(shape == t.shape(), "checkpoint: array '" + name + "' has shape " +
                                    shape_str(shape) + ", model expects " +
                                    shape_str(t.shape()));
    auto& dst = t.raw_value();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<real>(get_f64(is));
    require(is.good(), "checkpoint: truncated file '" + path + "'");
  }
}

}  // namespace sketchmatch
