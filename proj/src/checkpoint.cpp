#include "casenbr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace casenbr {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'S', 'E', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw DataError("checkpoint truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(buf[i]) << (8 * i));
  return v;
}

template <typename Real>
std::vector<std::uint8_t> encode(const Tensor<Real>& t) {
  using Bits = std::conditional_t<sizeof(Real) == 4, std::uint32_t, std::uint64_t>;
  std::vector<std::uint8_t> out(t.size() * sizeof(Real));
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto bits = std::bit_cast<Bits>(t[i]);
    for (std::size_t b = 0; b < sizeof(Real); ++b)
      out[i * sizeof(Real) + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return out;
}

template <typename Stored>
Stored decode_one(const std::uint8_t* p) {
  using Bits = std::conditional_t<sizeof(Stored) == 4, std::uint32_t, std::uint64_t>;
  Bits bits = 0;
  for (std::size_t b = 0; b < sizeof(Stored); ++b) bits |= static_cast<Bits>(Bits{p[b]} << (8 * b));
  return std::bit_cast<Stored>(bits);
}

}  // namespace

template <typename Real>
Checkpoint make_checkpoint(const ParamSet<Real>& params, nlohmann::json manifest) {
  Checkpoint ckpt;
  ckpt.manifest = std::move(manifest);
  for (const auto& [name, v] : params) {
    ckpt.tensors.push_back({name, static_cast<std::uint8_t>(sizeof(Real)), v->value.rows(),
                            v->value.cols(), encode(v->value)});
  }
  return ckpt;
}

template <typename Real>
void load_into(const Checkpoint& ckpt, ParamSet<Real>& params) {
  if (ckpt.tensors.size() != params.size())
    throw DataError("checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                    " tensors, model expects " + std::to_string(params.size()));
  for (const auto& st : ckpt.tensors) {
    if (!params.contains(st.name)) throw DataError("checkpoint tensor not in model: " + st.name);
    auto& value = params.get(st.name)->value;
    if (value.rows() != st.rows || value.cols() != st.cols)
      throw DataError("checkpoint tensor " + st.name + " has shape [" + std::to_string(st.rows) +
                      "x" + std::to_string(st.cols) + "], model expects " + value.shape_string());
    for (std::size_t i = 0; i < value.size(); ++i) {
      const std::uint8_t* p = st.payload.data() + i * st.element_bytes;
      value[i] = st.element_bytes == 4 ? static_cast<Real>(decode_one<float>(p))
                                       : static_cast<Real>(decode_one<double>(p));
    }
  }
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  const std::string manifest = ckpt.manifest.dump();
  put<std::uint64_t>(out, manifest.size());
  out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  put<std::uint64_t>(out, ckpt.tensors.size());
  for (const auto& t : ckpt.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint8_t>(out, t.element_bytes);
    put<std::uint64_t>(out, t.rows);
    put<std::uint64_t>(out, t.cols);
    out.write(reinterpret_cast<const char*>(t.payload.data()),
              static_cast<std::streamsize>(t.payload.size()));
  }
  if (!out) throw DataError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a checkpoint file (bad magic)");
  if (const auto version = get<std::uint32_t>(in); version != kVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  std::string manifest(get<std::uint64_t>(in), '\0');
  if (!in.read(manifest.data(), static_cast<std::streamsize>(manifest.size())))
    throw DataError("checkpoint truncated in manifest");
  ckpt.manifest = nlohmann::json::parse(manifest);
  const auto count = get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.name.resize(get<std::uint32_t>(in));
    if (!in.read(t.name.data(), static_cast<std::streamsize>(t.name.size())))
      throw DataError("checkpoint truncated in tensor name");
    t.element_bytes = get<std::uint8_t>(in);
    if (t.element_bytes != 4 && t.element_bytes != 8)
      throw DataError("checkpoint tensor " + t.name + " has unsupported element size");
    t.rows = get<std::uint64_t>(in);
    t.cols = get<std::uint64_t>(in);
    t.payload.resize(t.rows * t.cols * t.element_bytes);
    if (!in.read(reinterpret_cast<char*>(t.payload.data()),
                 static_cast<std::streamsize>(t.payload.size())))
      throw DataError("checkpoint truncated in tensor " + t.name);
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

std::string checkpoint_bytes(const Checkpoint& ckpt) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(out, ckpt);
  return out.str();
}

template Checkpoint make_checkpoint(const ParamSet<float>&, nlohmann::json);
template Checkpoint make_checkpoint(const ParamSet<double>&, nlohmann::json);
template void load_into(const Checkpoint&, ParamSet<float>&);
template void load_into(const Checkpoint&, ParamSet<double>&);

}  // namespace casenbr
