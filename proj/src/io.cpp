#include "tora/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tora/error.hpp"

namespace tora::io {
namespace {

constexpr std::array<unsigned char, 6> kMagic = {0x93, 'N', 'U', 'M', 'P', 'Y'};
constexpr std::size_t kPreambleAlign = 64;
constexpr std::size_t kFixedPrefix = 10;  // magic(6) + version(2) + header length(2)

template <typename T>
T load_le(const std::byte* src) {
  T value;
  std::memcpy(&value, src, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    auto* raw = reinterpret_cast<unsigned char*>(&value);
    std::reverse(raw, raw + sizeof(T));
  }
  return value;
}

template <typename T>
void store_le(T value, std::byte* dst) {
  if constexpr (std::endian::native == std::endian::big) {
    auto* raw = reinterpret_cast<unsigned char*>(&value);
    std::reverse(raw, raw + sizeof(T));
  }
  std::memcpy(dst, &value, sizeof(T));
}

std::string shape_literal(const std::vector<std::size_t>& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << ", ";
    out << shape[i];
  }
  if (shape.size() == 1) out << ',';
  out << ')';
  return out.str();
}

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\n\r");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\n\r");
  return std::string(text.substr(first, last - first + 1));
}

// Returns the raw text of the value that follows `'key':` in the header dict.
std::string dict_value(const std::string& header, const std::string& key) {
  const std::string quoted = "'" + key + "'";
  auto pos = header.find(quoted);
  if (pos == std::string::npos) fail(ErrorCode::kFormat, "array header lacks key " + quoted);
  pos = header.find(':', pos + quoted.size());
  if (pos == std::string::npos) fail(ErrorCode::kFormat, "array header malformed near " + quoted);
  ++pos;
  const auto start = header.find_first_not_of(' ', pos);
  if (start == std::string::npos) fail(ErrorCode::kFormat, "array header truncated");
  if (header[start] == '(') {
    const auto close = header.find(')', start);
    if (close == std::string::npos) fail(ErrorCode::kFormat, "unterminated shape tuple");
    return header.substr(start, close - start + 1);
  }
  const auto end = header.find_first_of(",}", start);
  if (end == std::string::npos) fail(ErrorCode::kFormat, "array header malformed near " + quoted);
  return trim(std::string_view(header).substr(start, end - start));
}

std::vector<std::size_t> parse_shape(const std::string& tuple) {
  std::vector<std::size_t> shape;
  std::string body = tuple.substr(1, tuple.size() - 2);
  std::stringstream stream(body);
  std::string item;
  while (std::getline(stream, item, ',')) {
    const std::string token = trim(item);
    if (token.empty()) continue;
    if (!std::all_of(token.begin(), token.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      fail(ErrorCode::kFormat, "non-integer extent in shape " + tuple);
    }
    shape.push_back(static_cast<std::size_t>(std::stoull(token)));
  }
  return shape;
}

std::size_t checked_product(const std::vector<std::size_t>& shape) {
  std::size_t count = 1;
  for (std::size_t extent : shape) {
    if (extent != 0 && count > SIZE_MAX / extent) fail(ErrorCode::kFormat, "shape overflows");
    count *= extent;
  }
  return count;
}

}  // namespace

std::size_t element_width(DType dtype) { return dtype == DType::kFloat32 ? 4 : 8; }

std::string descr_of(DType dtype) { return dtype == DType::kFloat32 ? "<f4" : "<f8"; }

std::size_t ArrayFile::element_count() const { return checked_product(shape); }

void ArrayFile::validate() const {
  const std::size_t expected = element_count() * element_width(dtype);
  if (payload.size() != expected) {
    fail(ErrorCode::kValidation, "payload holds " + std::to_string(payload.size()) +
                                     " bytes but shape " + shape_literal(shape) + " needs " +
                                     std::to_string(expected));
  }
}

std::vector<double> ArrayFile::to_doubles() const {
  validate();
  const std::size_t count = element_count();
  std::vector<double> values(count);
  if (dtype == DType::kFloat64) {
    for (std::size_t i = 0; i < count; ++i) values[i] = load_le<double>(payload.data() + 8 * i);
  } else {
    for (std::size_t i = 0; i < count; ++i) values[i] = load_le<float>(payload.data() + 4 * i);
  }
  return values;
}

ArrayFile ArrayFile::from_doubles(DType dtype, std::vector<std::size_t> shape,
                                  std::span<const double> values) {
  ArrayFile array;
  array.dtype = dtype;
  array.shape = std::move(shape);
  if (array.element_count() != values.size()) {
    fail(ErrorCode::kValidation, "shape " + shape_literal(array.shape) + " needs " +
                                     std::to_string(array.element_count()) + " elements, got " +
                                     std::to_string(values.size()));
  }
  const std::size_t width = element_width(dtype);
  array.payload.resize(values.size() * width);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (dtype == DType::kFloat64) {
      store_le<double>(values[i], array.payload.data() + width * i);
    } else {
      store_le<float>(static_cast<float>(values[i]), array.payload.data() + width * i);
    }
  }
  return array;
}

std::vector<std::byte> encode_array(const ArrayFile& array) {
  array.validate();
  std::string header = "{'descr': '" + descr_of(array.dtype) +
                       "', 'fortran_order': False, 'shape': " + shape_literal(array.shape) + ", }";
  // Pad so that prefix + header + '\n' is a multiple of the alignment.
  const std::size_t unpadded = kFixedPrefix + header.size() + 1;
  const std::size_t padded = (unpadded + kPreambleAlign - 1) / kPreambleAlign * kPreambleAlign;
  header.append(padded - unpadded, ' ');
  header.push_back('\n');
  if (header.size() > 0xFFFF) fail(ErrorCode::kValidation, "array header exceeds 65535 bytes");

  std::vector<std::byte> bytes(kFixedPrefix + header.size() + array.payload.size());
  std::memcpy(bytes.data(), kMagic.data(), kMagic.size());
  bytes[6] = std::byte{0x01};
  bytes[7] = std::byte{0x00};
  store_le<std::uint16_t>(static_cast<std::uint16_t>(header.size()), bytes.data() + 8);
  std::memcpy(bytes.data() + kFixedPrefix, header.data(), header.size());
  if (!array.payload.empty()) {
    std::memcpy(bytes.data() + kFixedPrefix + header.size(), array.payload.data(),
                array.payload.size());
  }
  return bytes;
}

ArrayFile decode_array(std::span<const std::byte> bytes) {
  if (bytes.size() < kFixedPrefix ||
      std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    fail(ErrorCode::kFormat, "missing array magic");
  }
  if (bytes[6] != std::byte{0x01} || bytes[7] != std::byte{0x00}) {
    fail(ErrorCode::kFormat, "unsupported array format version");
  }
  const std::size_t header_len = load_le<std::uint16_t>(bytes.data() + 8);
  if (bytes.size() < kFixedPrefix + header_len) {
    fail(ErrorCode::kTruncated, "file ends inside the array header");
  }
  const std::string header(reinterpret_cast<const char*>(bytes.data() + kFixedPrefix), header_len);

  ArrayFile array;
  const std::string descr = dict_value(header, "descr");
  if (descr == "'<f8'") {
    array.dtype = DType::kFloat64;
  } else if (descr == "'<f4'") {
    array.dtype = DType::kFloat32;
  } else {
    fail(ErrorCode::kUnsupportedLayout, "unsupported dtype " + descr);
  }
  const std::string fortran = dict_value(header, "fortran_order");
  if (fortran == "True") fail(ErrorCode::kUnsupportedLayout, "column-major arrays are not supported");
  if (fortran != "False") fail(ErrorCode::kFormat, "bad fortran_order value " + fortran);
  const std::string shape = dict_value(header, "shape");
  if (shape.empty() || shape.front() != '(') fail(ErrorCode::kFormat, "shape is not a tuple");
  array.shape = parse_shape(shape);

  const std::size_t offset = kFixedPrefix + header_len;
  const std::size_t expected = array.element_count() * element_width(array.dtype);
  const std::size_t actual = bytes.size() - offset;
  if (actual != expected) {
    fail(ErrorCode::kTruncated, "payload holds " + std::to_string(actual) + " bytes, expected " +
                                    std::to_string(expected));
  }
  array.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
  return array;
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::byte> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    fail(ErrorCode::kIo, "failed reading " + path.string());
  }
  return bytes;
}

ArrayFile read_array(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_array(bytes);
}

void write_array(const std::filesystem::path& path, const ArrayFile& array) {
  const auto bytes = encode_array(array);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "failed writing " + path.string());
}

EmbeddingMatrix to_matrix(const ArrayFile& array) {
  if (array.shape.size() != 2) {
    fail(ErrorCode::kValidation, "expected a rank-2 (V, d) array, got rank " +
                                     std::to_string(array.shape.size()));
  }
  const auto values = array.to_doubles();
  const auto rows = static_cast<Index>(array.shape[0]);
  const auto cols = static_cast<Index>(array.shape[1]);
  EmbeddingMatrix matrix(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) matrix(i, j) = values[static_cast<std::size_t>(i * cols + j)];
  }
  return matrix;
}

std::vector<EmbeddingMatrix> to_stack(const ArrayFile& array) {
  if (array.shape.size() == 2) return {to_matrix(array)};
  if (array.shape.size() != 3) {
    fail(ErrorCode::kValidation, "expected a rank-2 or rank-3 array, got rank " +
                                     std::to_string(array.shape.size()));
  }
  const auto values = array.to_doubles();
  const auto rows = static_cast<Index>(array.shape[1]);
  const auto cols = static_cast<Index>(array.shape[2]);
  std::vector<EmbeddingMatrix> stack;
  stack.reserve(array.shape[0]);
  std::size_t cursor = 0;
  for (std::size_t b = 0; b < array.shape[0]; ++b) {
    EmbeddingMatrix matrix(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) matrix(i, j) = values[cursor++];
    }
    stack.push_back(std::move(matrix));
  }
  return stack;
}

ArrayFile from_matrix(const EmbeddingMatrix& matrix, DType dtype) {
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(matrix.size()));
  for (Index i = 0; i < matrix.rows(); ++i) {
    for (Index j = 0; j < matrix.cols(); ++j) values.push_back(matrix(i, j));
  }
  return ArrayFile::from_doubles(
      dtype, {static_cast<std::size_t>(matrix.rows()), static_cast<std::size_t>(matrix.cols())},
      values);
}

ArrayFile from_stack(const std::vector<EmbeddingMatrix>& stack, DType dtype) {
  require(!stack.empty(), ErrorCode::kValidation, "cannot encode an empty stack");
  const Index rows = stack.front().rows();
  const Index cols = stack.front().cols();
  std::vector<double> values;
  values.reserve(stack.size() * static_cast<std::size_t>(rows * cols));
  for (const auto& matrix : stack) {
    require(matrix.rows() == rows && matrix.cols() == cols, ErrorCode::kValidation,
            "stacked matrices must share a shape");
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) values.push_back(matrix(i, j));
    }
  }
  return ArrayFile::from_doubles(
      dtype, {stack.size(), static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)},
      values);
}

std::string digest_hex(std::span<const std::byte> bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (std::byte b : bytes) {
    hash ^= static_cast<std::uint64_t>(b);
    hash *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[hash & 0xF];
    hash >>= 4;
  }
  return out;
}

}  // namespace tora::io
