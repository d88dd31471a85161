#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tora/types.hpp"

namespace tora::io {

enum class DType { kFloat32, kFloat64 };

std::size_t element_width(DType dtype);
std::string descr_of(DType dtype);

/// In-memory image of an array file: dtype tag, shape and the raw
/// little-endian row-major payload. Keeping raw bytes (rather than decoded
/// doubles) is what makes read/write roundtrips bit-exact.
struct ArrayFile {
  DType dtype = DType::kFloat64;
  std::vector<std::size_t> shape;
  std::vector<std::byte> payload;

  std::size_t element_count() const;

  /// Throws validation_error when payload size disagrees with shape.
  void validate() const;

  /// Decodes the payload, widening 32-bit values.
  std::vector<double> to_doubles() const;

  /// Encodes `values` at the given width. Narrowing to 32-bit rounds to nearest.
  static ArrayFile from_doubles(DType dtype, std::vector<std::size_t> shape,
                                std::span<const double> values);

  bool operator==(const ArrayFile&) const = default;
};

std::vector<std::byte> encode_array(const ArrayFile& array);
ArrayFile decode_array(std::span<const std::byte> bytes);

ArrayFile read_array(const std::filesystem::path& path);
void write_array(const std::filesystem::path& path, const ArrayFile& array);

// Matrix views of array files. Rank-2 files hold a single (V, d) matrix;
// rank-3 files hold a (B, V, d) stack of per-block matrices.
EmbeddingMatrix to_matrix(const ArrayFile& array);
std::vector<EmbeddingMatrix> to_stack(const ArrayFile& array);
ArrayFile from_matrix(const EmbeddingMatrix& matrix, DType dtype);
ArrayFile from_stack(const std::vector<EmbeddingMatrix>& stack, DType dtype);

/// FNV-1a 64-bit digest rendered as 16 hex digits; identifies inputs in reports.
std::string digest_hex(std::span<const std::byte> bytes);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);

}  // namespace tora::io
