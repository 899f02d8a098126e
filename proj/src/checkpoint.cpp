#include "coswin/checkpoint.hpp"

#include <array>
#include <cstdio>
#include <fstream>

namespace coswin {

namespace {

// CRC-64/ECMA-182, polynomial 0x42F0E1EBA9EA3693, init 0, not reflected.
const std::array<uint64_t, 256>& crc_table() {
  static const std::array<uint64_t, 256> table = [] {
    std::array<uint64_t, 256> t{};
    const uint64_t poly = 0x42F0E1EBA9EA3693ull;
    for (uint64_t i = 0; i < 256; ++i) {
      uint64_t c = i << 56;
      for (int b = 0; b < 8; ++b) c = (c & 0x8000000000000000ull) ? (c << 1) ^ poly : c << 1;
      t[i] = c;
    }
    return t;
  }();
  return table;
}

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}
void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct Reader {
  const uint8_t* p;
  size_t n, pos = 0;
  void need(size_t k) const {
    if (pos + k > n) throw CkptFormatError("checkpoint truncated");
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(p[pos] | (p[pos + 1] << 8));
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint8_t u8() {
    need(1);
    return p[pos++];
  }
};

}  // namespace

uint64_t crc64(const uint8_t* data, size_t len, uint64_t crc) {
  const auto& t = crc_table();
  for (size_t i = 0; i < len; ++i)
    crc = (crc << 8) ^ t[static_cast<uint8_t>((crc >> 56) ^ data[i])];
  return crc;
}

void save_checkpoint_file(const std::string& path, const std::vector<TensorBlob>& blobs) {
  std::string buf;
  buf += "CSWN";
  put_u16(buf, 1);
  put_u32(buf, static_cast<uint32_t>(blobs.size()));
  for (const auto& b : blobs) {
    put_u16(buf, static_cast<uint16_t>(b.name.size()));
    buf += b.name;
    buf.push_back(static_cast<char>(b.dtype));
    buf.push_back(static_cast<char>(b.shape.size()));
    for (int64_t e : b.shape) put_u32(buf, static_cast<uint32_t>(e));
    buf.append(reinterpret_cast<const char*>(b.raw.data()), b.raw.size());
  }
  uint64_t crc = crc64(reinterpret_cast<const uint8_t*>(buf.data()), buf.size());
  put_u64(buf, crc);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError("checkpoint write failed: " + path);
}

std::vector<TensorBlob> load_checkpoint_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 18) throw CkptFormatError("checkpoint truncated");

  const uint8_t* bytes = reinterpret_cast<const uint8_t*>(buf.data());
  uint64_t stored = 0;
  for (int i = 0; i < 8; ++i)
    stored |= static_cast<uint64_t>(bytes[buf.size() - 8 + i]) << (8 * i);
  if (crc64(bytes, buf.size() - 8) != stored)
    throw CkptCrcError("checkpoint CRC mismatch: " + path);

  Reader r{bytes, buf.size() - 8};
  r.need(4);
  if (std::memcmp(buf.data(), "CSWN", 4) != 0)
    throw CkptFormatError("bad checkpoint magic");
  r.pos = 4;
  uint16_t version = r.u16();
  if (version != 1)
    throw CkptFormatError("unsupported checkpoint version " + std::to_string(version));
  uint32_t count = r.u32();

  std::vector<TensorBlob> blobs;
  blobs.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    TensorBlob b;
    uint16_t nl = r.u16();
    r.need(nl);
    b.name.assign(buf.data() + r.pos, nl);
    r.pos += nl;
    b.dtype = r.u8();
    if (b.dtype > 1) throw CkptFormatError("unknown dtype code in tensor '" + b.name + "'");
    uint8_t rank = r.u8();
    int64_t n = 1;
    for (uint8_t d = 0; d < rank; ++d) {
      int64_t e = r.u32();
      b.shape.push_back(e);
      n *= e;
    }
    size_t bytes_len = static_cast<size_t>(n) * (b.dtype == 0 ? 4 : 8);
    r.need(bytes_len);
    b.raw.assign(bytes + r.pos, bytes + r.pos + bytes_len);
    r.pos += bytes_len;
    blobs.push_back(std::move(b));
  }
  if (r.pos != r.n) throw CkptFormatError("trailing bytes in checkpoint");
  return blobs;
}

}  // namespace coswin
