#include "cgn/serialize.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace cgn {

namespace {

constexpr char kMagic[] = "CGNT1\n";

template <class T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void write_tensor_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open archive for writing: " + path.string());
  out.write(kMagic, sizeof(kMagic) - 1);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(archive.size()));
  for (const auto& [name, tensor] : archive) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (int d : tensor.shape()) write_pod<std::int32_t>(out, d);
    out.write(reinterpret_cast<const char*>(tensor.data()),
              static_cast<std::streamsize>(tensor.numel() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("archive write failed: " + path.string());
}

TensorArchive read_tensor_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open archive: " + path.string());
  char magic[sizeof(kMagic) - 1];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, sizeof(magic)) != kMagic)
    throw std::runtime_error("not a tensor archive: " + path.string());
  const auto count = read_pod<std::uint32_t>(in);
  TensorArchive archive;
  archive.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rank = read_pod<std::uint32_t>(in);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = read_pod<std::int32_t>(in);
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!in) throw std::runtime_error("truncated tensor archive: " + path.string());
    archive.emplace_back(std::move(name), std::move(t));
  }
  return archive;
}

const Tensor& archive_get(const TensorArchive& archive, const std::string& name) {
  for (const auto& [n, t] : archive)
    if (n == name) return t;
  throw std::out_of_range("archive has no tensor named " + name);
}

bool archive_has(const TensorArchive& archive, const std::string& name) {
  for (const auto& [n, t] : archive)
    if (n == name) return true;
  return false;
}

}  // namespace cgn
