#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "exion/qtensor.hpp"

// Binary activation traces:
//   "EXTR" | u32 version | u32 count
//   per tensor: u32 rank | u32 dims[rank] | u32 dtype | payload
// All integers little-endian. i12 values are stored in int16 slots.
namespace exion::bench {

inline constexpr uint32_t kTraceVersion = 1;

enum class DType : uint32_t { I12 = 1, I16 = 2, I32 = 3 };

const char* dtype_name(DType t);
std::size_t dtype_width(DType t);
int dtype_bits(DType t);

struct TraceTensor {
  DType dtype = DType::I12;
  Shape dims;
  std::vector<int32_t> data;

  friend bool operator==(const TraceTensor&, const TraceTensor&) = default;
};

std::vector<uint8_t> serialize_trace(const std::vector<TraceTensor>& tensors);
// Throws ParseError with the byte offset of the first bad field.
std::vector<TraceTensor> parse_trace(const std::vector<uint8_t>& bytes);

void save_trace(const std::string& path, const std::vector<TraceTensor>& tensors);
std::vector<TraceTensor> load_trace(const std::string& path);

TraceTensor to_trace(const QTensor& t);
QTensor from_trace(const TraceTensor& t, int scale);

}  // namespace exion::bench
