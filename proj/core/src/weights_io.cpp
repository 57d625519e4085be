#include "inrattr/weights_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

namespace inrattr {
namespace {

constexpr char kMagic[4] = {'I', 'N', 'R', 'W'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "weight container I/O assumes a little-endian host");

template <typename T>
void write_le(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (in.gcount() != sizeof(T)) {
    throw TruncatedPayloadError("weights: truncated payload in " + path.string());
  }
  return v;
}

}  // namespace

void save_tensors(const std::filesystem::path& path,
                  const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("weights: cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  write_le<std::uint32_t>(out, kVersion);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& nt : tensors) {
    if (nt.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw IoError("weights: tensor name too long: " + nt.name);
    }
    write_le<std::uint16_t>(out, static_cast<std::uint16_t>(nt.name.size()));
    out.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    write_le<std::uint8_t>(out, static_cast<std::uint8_t>(nt.value->rank()));
    for (std::size_t e : nt.value->shape) {
      write_le<std::uint32_t>(out, static_cast<std::uint32_t>(e));
    }
    out.write(reinterpret_cast<const char*>(nt.value->data.data()),
              static_cast<std::streamsize>(nt.value->data.size() * sizeof(float)));
  }
  if (!out) throw IoError("weights: write failed for " + path.string());
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("weights: cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw BadMagicError("weights: bad magic in " + path.string());
  }
  const auto version = read_le<std::uint32_t>(in, path);
  if (version != kVersion) {
    throw VersionMismatchError("weights: unsupported version " +
                               std::to_string(version) + " in " + path.string());
  }
  const auto count = read_le<std::uint32_t>(in, path);
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_le<std::uint16_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (in.gcount() != name_len) {
      throw TruncatedPayloadError("weights: truncated payload in " + path.string());
    }
    const auto rank = read_le<std::uint8_t>(in, path);
    Shape shape(rank);
    for (auto& e : shape) e = read_le<std::uint32_t>(in, path);
    auto t = tensor(shape, 0.0f, false);
    const std::streamsize bytes =
        static_cast<std::streamsize>(t->data.size() * sizeof(float));
    in.read(reinterpret_cast<char*>(t->data.data()), bytes);
    if (in.gcount() != bytes) {
      throw TruncatedPayloadError("weights: truncated payload in " + path.string());
    }
    tensors.push_back(NamedTensor{std::move(name), std::move(t)});
  }
  return tensors;
}

void save_single_tensor(const std::filesystem::path& path, const std::string& name,
                        const Tensor& t) {
  auto copy = tensor(t.shape, t.data, false);
  save_tensors(path, {NamedTensor{name, copy}});
}

TensorPtr load_single_tensor(const std::filesystem::path& path, const std::string& name) {
  auto all = load_tensors(path);
  for (auto& nt : all) {
    if (nt.name == name) return nt.value;
  }
  throw IoError("weights: tensor '" + name + "' not found in " + path.string());
}

}  // namespace inrattr
