#include "exion/bench/trace.hpp"

#include <fstream>
#include <iterator>
#include <limits>

#include "exion/error.hpp"

namespace exion::bench {

const char* dtype_name(DType t) {
  switch (t) {
    case DType::I12: return "i12";
    case DType::I16: return "i16";
    case DType::I32: return "i32";
  }
  return "unknown";
}

std::size_t dtype_width(DType t) { return t == DType::I32 ? 4 : 2; }

int dtype_bits(DType t) {
  switch (t) {
    case DType::I12: return 12;
    case DType::I16: return 16;
    case DType::I32: return 32;
  }
  return 0;
}

namespace {

constexpr uint32_t kMaxRank = 8;

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<uint8_t>& b) : b_(b) {}

  std::size_t pos() const noexcept { return pos_; }

  void need(std::size_t n, const std::string& what) const {
    if (b_.size() - pos_ < n) {
      throw ParseError(pos_, "truncated " + what + ": expected " + std::to_string(n) + " bytes, " +
                                 std::to_string(b_.size() - pos_) + " available");
    }
  }

  uint32_t u32(const std::string& what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  int32_t value(std::size_t width) {
    uint32_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v |= static_cast<uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += width;
    if (width == 2) return static_cast<int16_t>(static_cast<uint16_t>(v));
    return static_cast<int32_t>(v);
  }

 private:
  const std::vector<uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<uint8_t> serialize_trace(const std::vector<TraceTensor>& tensors) {
  std::vector<uint8_t> out = {'E', 'X', 'T', 'R'};
  put_u32(out, kTraceVersion);
  put_u32(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.dims.size() > kMaxRank) throw ContractError("serialize_trace: rank above 8");
    if (element_count(t.dims) != t.data.size()) throw ContractError("serialize_trace: dims do not match data");
    put_u32(out, static_cast<uint32_t>(t.dims.size()));
    for (const auto d : t.dims) put_u32(out, static_cast<uint32_t>(d));
    put_u32(out, static_cast<uint32_t>(t.dtype));
    const std::size_t w = dtype_width(t.dtype);
    for (const int32_t v : t.data) {
      if (!fits_bits(v, dtype_bits(t.dtype))) {
        throw RangeError("serialize_trace: value " + std::to_string(v) + " does not fit " + dtype_name(t.dtype));
      }
      const auto u = static_cast<uint32_t>(v);
      for (std::size_t i = 0; i < w; ++i) out.push_back(static_cast<uint8_t>(u >> (8 * i)));
    }
  }
  return out;
}

std::vector<TraceTensor> parse_trace(const std::vector<uint8_t>& bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (!(bytes[0] == 'E' && bytes[1] == 'X' && bytes[2] == 'T' && bytes[3] == 'R')) {
    throw ParseError(0, "bad magic, expected \"EXTR\"");
  }
  r.u32("magic");
  const std::size_t version_at = r.pos();
  const uint32_t version = r.u32("version");
  if (version != kTraceVersion) throw ParseError(version_at, "unsupported trace version " + std::to_string(version));
  const uint32_t count = r.u32("tensor count");

  std::vector<TraceTensor> out;
  for (uint32_t n = 0; n < count; ++n) {
    const std::string tag = "tensor " + std::to_string(n);
    const std::size_t rank_at = r.pos();
    const uint32_t rank = r.u32(tag + " rank");
    if (rank > kMaxRank) throw ParseError(rank_at, tag + ": rank " + std::to_string(rank) + " above 8");
    TraceTensor t;
    uint64_t elements = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      const std::size_t dim_at = r.pos();
      const uint32_t d = r.u32(tag + " dims");
      if (d != 0 && elements > std::numeric_limits<uint32_t>::max() / d) {
        throw ParseError(dim_at, tag + ": dims overflow the element count");
      }
      elements *= d;
      t.dims.push_back(d);
    }
    const std::size_t dtype_at = r.pos();
    const uint32_t code = r.u32(tag + " dtype");
    if (code < 1 || code > 3) throw ParseError(dtype_at, tag + ": unknown dtype code " + std::to_string(code));
    t.dtype = static_cast<DType>(code);
    const std::size_t w = dtype_width(t.dtype);
    r.need(elements * w, tag + " payload");
    t.data.reserve(elements);
    for (uint64_t i = 0; i < elements; ++i) {
      const std::size_t at = r.pos();
      const int32_t v = r.value(w);
      if (!fits_bits(v, dtype_bits(t.dtype))) {
        throw ParseError(at, tag + ": value " + std::to_string(v) + " outside " + dtype_name(t.dtype) + " range");
      }
      t.data.push_back(v);
    }
    out.push_back(std::move(t));
  }
  if (r.pos() != bytes.size()) throw ParseError(r.pos(), "trailing bytes after the last tensor");
  return out;
}

void save_trace(const std::string& path, const std::vector<TraceTensor>& tensors) {
  const auto bytes = serialize_trace(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path + "' failed");
}

std::vector<TraceTensor> load_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open trace '" + path + "'");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_trace(bytes);
}

TraceTensor to_trace(const QTensor& t) {
  TraceTensor out;
  out.dtype = t.bits() <= 12 ? DType::I12 : t.bits() <= 16 ? DType::I16 : DType::I32;
  out.dims = t.shape();
  out.data.assign(t.data().begin(), t.data().end());
  return out;
}

QTensor from_trace(const TraceTensor& t, int scale) { return QTensor(t.dims, dtype_bits(t.dtype), scale, t.data); }

}  // namespace exion::bench
