#include <zlib.h>

#include <fstream>
#include <iterator>
#include "json.hpp"

#include "livestyle/archive.hpp"

namespace livestyle {
namespace {

constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;
// 1980-01-01 00:00 in DOS format; keeps archives byte-reproducible.
constexpr std::uint16_t kDosDate = (0 << 9) | (1 << 5) | 1;

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(v & 0xFF);
  out.push_back(v >> 8);
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint16_t get16(std::span<const std::uint8_t> b, std::size_t at) {
  if (at + 2 > b.size()) throw ArchiveError("truncated zip");
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t get32(std::span<const std::uint8_t> b, std::size_t at) {
  if (at + 4 > b.size()) throw ArchiveError("truncated zip");
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

struct ZipEntry {
  std::string name;
  std::vector<std::uint8_t> data;
};

std::vector<std::uint8_t> write_zip(const std::vector<ZipEntry>& entries) {
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> central;
  for (const auto& e : entries) {
    const auto offset = static_cast<std::uint32_t>(out.size());
    const auto crc = static_cast<std::uint32_t>(::crc32(0L, e.data.data(), static_cast<uInt>(e.data.size())));
    const auto size = static_cast<std::uint32_t>(e.data.size());
    const auto name_len = static_cast<std::uint16_t>(e.name.size());

    put32(out, kLocalSig);
    put16(out, 20);  // version needed
    put16(out, 0x0800);  // UTF-8 names
    put16(out, 0);  // stored
    put16(out, 0);
    put16(out, kDosDate);
    put32(out, crc);
    put32(out, size);
    put32(out, size);
    put16(out, name_len);
    put16(out, 0);
    out.insert(out.end(), e.name.begin(), e.name.end());
    out.insert(out.end(), e.data.begin(), e.data.end());

    put32(central, kCentralSig);
    put16(central, 20);  // made by
    put16(central, 20);
    put16(central, 0x0800);
    put16(central, 0);
    put16(central, 0);
    put16(central, kDosDate);
    put32(central, crc);
    put32(central, size);
    put32(central, size);
    put16(central, name_len);
    put16(central, 0);  // extra
    put16(central, 0);  // comment
    put16(central, 0);  // disk
    put16(central, 0);  // internal attrs
    put32(central, 0);  // external attrs
    put32(central, offset);
    central.insert(central.end(), e.name.begin(), e.name.end());
  }
  const auto cd_offset = static_cast<std::uint32_t>(out.size());
  out.insert(out.end(), central.begin(), central.end());
  put32(out, kEndSig);
  put16(out, 0);
  put16(out, 0);
  put16(out, static_cast<std::uint16_t>(entries.size()));
  put16(out, static_cast<std::uint16_t>(entries.size()));
  put32(out, static_cast<std::uint32_t>(central.size()));
  put32(out, cd_offset);
  put16(out, 0);
  return out;
}

std::vector<std::uint8_t> inflate_raw(std::span<const std::uint8_t> in, std::size_t expected) {
  std::vector<std::uint8_t> out(expected);
  z_stream zs{};
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) throw ArchiveError("inflateInit failed");
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || zs.total_out != expected) throw ArchiveError("corrupt deflate stream");
  return out;
}

std::unordered_map<std::string, std::vector<std::uint8_t>> read_zip(std::span<const std::uint8_t> b) {
  if (b.size() < 22) throw ArchiveError("not a zip archive");
  std::size_t end = std::string::npos;
  const std::size_t lowest = b.size() > 22 + 0xFFFF ? b.size() - 22 - 0xFFFF : 0;
  for (std::size_t at = b.size() - 22 + 1; at-- > lowest;)
    if (get32(b, at) == kEndSig) {
      end = at;
      break;
    }
  if (end == std::string::npos) throw ArchiveError("zip end-of-central-directory not found");
  const std::size_t count = get16(b, end + 10);
  std::size_t at = get32(b, end + 16);

  std::unordered_map<std::string, std::vector<std::uint8_t>> files;
  for (std::size_t i = 0; i < count; ++i) {
    if (get32(b, at) != kCentralSig) throw ArchiveError("bad central directory entry");
    const std::uint16_t method = get16(b, at + 10);
    const std::uint32_t crc = get32(b, at + 16);
    const std::uint32_t csize = get32(b, at + 20);
    const std::uint32_t usize = get32(b, at + 24);
    const std::uint16_t name_len = get16(b, at + 28);
    const std::uint16_t extra_len = get16(b, at + 30);
    const std::uint16_t comment_len = get16(b, at + 32);
    const std::uint32_t local = get32(b, at + 42);
    if (at + 46 + name_len > b.size()) throw ArchiveError("truncated zip");
    std::string name(reinterpret_cast<const char*>(b.data() + at + 46), name_len);
    at += 46 + name_len + extra_len + comment_len;

    if (get32(b, local) != kLocalSig) throw ArchiveError("bad local header for " + name);
    const std::size_t data_at = local + 30 + get16(b, local + 26) + get16(b, local + 28);
    if (data_at + csize > b.size()) throw ArchiveError("truncated data for " + name);
    auto payload = b.subspan(data_at, csize);
    std::vector<std::uint8_t> data;
    if (method == 0)
      data.assign(payload.begin(), payload.end());
    else if (method == 8)
      data = inflate_raw(payload, usize);
    else
      throw ArchiveError("unsupported zip compression method " + std::to_string(method) + " for " + name);
    if (static_cast<std::uint32_t>(::crc32(0L, data.data(), static_cast<uInt>(data.size()))) != crc)
      throw ArchiveError("crc mismatch for " + name);
    files.emplace(std::move(name), std::move(data));
  }
  return files;
}

}  // namespace

std::vector<std::uint8_t> serialize_archive(const WeightArchive& archive) {
  archive.validate();
  nlohmann::json manifest = nlohmann::json::array();
  std::vector<ZipEntry> entries;
  entries.push_back({"manifest.json", {}});
  for (const auto& e : archive.manifest()) {
    const std::string file = "tensors/" + e.tensor_name + ".f32";
    manifest.push_back({{"name", e.tensor_name}, {"shape", e.shape}, {"dtype", e.dtype}, {"file", file}});
    auto bytes = archive.bytes(e.tensor_name);
    entries.push_back({file, {bytes.begin(), bytes.end()}});
  }
  const std::string text = manifest.dump(2);
  entries.front().data.assign(text.begin(), text.end());
  return write_zip(entries);
}

WeightArchive parse_archive(std::span<const std::uint8_t> zip_bytes) {
  auto files = read_zip(zip_bytes);
  auto m = files.find("manifest.json");
  if (m == files.end()) throw ArchiveError("archive has no manifest.json");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(m->second.begin(), m->second.end());
  } catch (const nlohmann::json::exception& e) {
    throw ArchiveError(std::string("manifest.json: ") + e.what());
  }
  if (!manifest.is_array()) throw ArchiveError("manifest.json must be an array");

  WeightArchive archive;
  for (const auto& item : manifest) {
    try {
      const auto name = item.at("name").get<std::string>();
      const auto shape = item.at("shape").get<Shape>();
      const auto dtype = item.at("dtype").get<std::string>();
      const auto file = item.at("file").get<std::string>();
      if (dtype != "f32") throw ArchiveError("tensor '" + name + "' has unsupported dtype " + dtype);
      auto f = files.find(file);
      if (f == files.end()) throw ArchiveError("tensor '" + name + "' references missing file " + file);
      if (f->second.size() != shape_numel(shape) * 4)
        throw ArchiveError("tensor '" + name + "' blob is " + std::to_string(f->second.size()) +
                           " bytes, expected " + std::to_string(shape_numel(shape) * 4));
      std::vector<float> values(shape_numel(shape));
      for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(f->second[4 * i + b]) << (8 * b);
        std::memcpy(&values[i], &bits, 4);
      }
      archive.add(name, shape, values);
    } catch (const nlohmann::json::exception& e) {
      throw ArchiveError(std::string("manifest entry: ") + e.what());
    }
  }
  archive.validate();
  return archive;
}

void save_archive(const WeightArchive& archive, const std::filesystem::path& path) {
  const auto bytes = serialize_archive(archive);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArchiveError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArchiveError("failed writing " + path.string());
}

WeightArchive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArchiveError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_archive(bytes);
}

}  // namespace livestyle
