#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "kcd/error.hpp"
#include "kcd/matrix.hpp"
#include "kcd/tensor.hpp"

// NPY v1.0 container support. Only little-endian, C-order payloads are
// accepted: '<f4'/'<f8' for activation tensors and matrices, '<i4'/'<i8'
// for label vectors. Writers emit v1.0 headers padded so the total header
// size is a multiple of 64 bytes.

namespace kcd {
namespace npy {

inline constexpr char kMagic[6] = {'\x93', 'N', 'U', 'M', 'P', 'Y'};

struct Header {
  std::string descr;
  bool fortran_order = false;
  std::vector<std::size_t> shape;
};

namespace detail {

inline void skip_spaces(const std::string& s, std::size_t& i) {
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\n')) ++i;
}

inline std::string parse_quoted(const std::string& s, std::size_t& i) {
  if (i >= s.size() || (s[i] != '\'' && s[i] != '"'))
    fail(ErrorCategory::FormatError, "npy header: expected quoted string");
  const char quote = s[i++];
  std::string out;
  while (i < s.size() && s[i] != quote) out.push_back(s[i++]);
  if (i >= s.size()) fail(ErrorCategory::FormatError, "npy header: unterminated string");
  ++i;
  return out;
}

// Minimal parser for the Python dict literal numpy writes. Key order is not
// assumed; unknown keys are rejected.
inline Header parse_dict(const std::string& text) {
  Header h;
  bool saw_descr = false, saw_order = false, saw_shape = false;
  std::size_t i = 0;
  skip_spaces(text, i);
  if (i >= text.size() || text[i] != '{')
    fail(ErrorCategory::FormatError, "npy header: missing '{'");
  ++i;
  while (true) {
    skip_spaces(text, i);
    if (i < text.size() && text[i] == '}') break;
    const std::string key = parse_quoted(text, i);
    skip_spaces(text, i);
    if (i >= text.size() || text[i] != ':')
      fail(ErrorCategory::FormatError, "npy header: missing ':'");
    ++i;
    skip_spaces(text, i);
    if (key == "descr") {
      h.descr = parse_quoted(text, i);
      saw_descr = true;
    } else if (key == "fortran_order") {
      if (text.compare(i, 4, "True") == 0) {
        h.fortran_order = true;
        i += 4;
      } else if (text.compare(i, 5, "False") == 0) {
        h.fortran_order = false;
        i += 5;
      } else {
        fail(ErrorCategory::FormatError, "npy header: bad fortran_order");
      }
      saw_order = true;
    } else if (key == "shape") {
      if (i >= text.size() || text[i] != '(')
        fail(ErrorCategory::FormatError, "npy header: shape is not a tuple");
      ++i;
      while (true) {
        skip_spaces(text, i);
        if (i < text.size() && text[i] == ')') {
          ++i;
          break;
        }
        std::size_t dim = 0;
        bool any_digit = false;
        while (i < text.size() && text[i] >= '0' && text[i] <= '9') {
          dim = dim * 10 + static_cast<std::size_t>(text[i] - '0');
          ++i;
          any_digit = true;
        }
        if (!any_digit) fail(ErrorCategory::FormatError, "npy header: bad shape entry");
        h.shape.push_back(dim);
        skip_spaces(text, i);
        if (i < text.size() && text[i] == ',') ++i;
      }
      saw_shape = true;
    } else {
      fail(ErrorCategory::FormatError, "npy header: unknown key '" + key + "'");
    }
    skip_spaces(text, i);
    if (i < text.size() && text[i] == ',') ++i;
  }
  if (!saw_descr || !saw_order || !saw_shape)
    fail(ErrorCategory::FormatError, "npy header: missing required key");
  return h;
}

inline Header read_header(std::ifstream& in, const std::string& path) {
  char magic[6];
  if (!in.read(magic, 6) || std::memcmp(magic, kMagic, 6) != 0)
    fail(ErrorCategory::FormatError, "not an NPY file: " + path);
  unsigned char version[2];
  if (!in.read(reinterpret_cast<char*>(version), 2))
    fail(ErrorCategory::FormatError, "truncated NPY version: " + path);
  if (version[0] != 1 || version[1] != 0)
    fail(ErrorCategory::FormatError, "unsupported NPY version " +
                                         std::to_string(version[0]) + "." +
                                         std::to_string(version[1]) + ": " + path);
  unsigned char len_bytes[2];
  if (!in.read(reinterpret_cast<char*>(len_bytes), 2))
    fail(ErrorCategory::FormatError, "truncated NPY header length: " + path);
  const std::size_t header_len =
      static_cast<std::size_t>(len_bytes[0]) | (static_cast<std::size_t>(len_bytes[1]) << 8);
  std::string dict(header_len, '\0');
  if (!in.read(dict.data(), static_cast<std::streamsize>(header_len)))
    fail(ErrorCategory::FormatError, "truncated NPY header: " + path);
  return parse_dict(dict);
}

inline void write_header(std::ofstream& out, const std::string& descr,
                         const std::vector<std::size_t>& shape) {
  std::ostringstream dict;
  dict << "{'descr': '" << descr << "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    dict << shape[i];
    if (shape.size() == 1 || i + 1 < shape.size()) dict << ",";
    if (i + 1 < shape.size()) dict << " ";
  }
  dict << "), }";
  std::string body = dict.str();
  // magic(6) + version(2) + hlen(2) + dict + pad + '\n', total % 64 == 0.
  const std::size_t unpadded = 6 + 2 + 2 + body.size() + 1;
  const std::size_t padded = (unpadded + 63) / 64 * 64;
  body.append(padded - unpadded, ' ');
  body.push_back('\n');
  if (body.size() > 0xffff)
    fail(ErrorCategory::FormatError, "npy header too large for v1.0");
  out.write(kMagic, 6);
  const unsigned char version[2] = {1, 0};
  out.write(reinterpret_cast<const char*>(version), 2);
  const auto hlen = static_cast<std::uint16_t>(body.size());
  const unsigned char len_bytes[2] = {static_cast<unsigned char>(hlen & 0xff),
                                      static_cast<unsigned char>(hlen >> 8)};
  out.write(reinterpret_cast<const char*>(len_bytes), 2);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
}

template <typename T>
std::vector<T> read_payload(std::ifstream& in, std::size_t count, const std::string& path) {
  std::vector<T> buf(count);
  if (count > 0 &&
      !in.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(count * sizeof(T))))
    fail(ErrorCategory::FormatError, "truncated NPY payload: " + path);
  char extra;
  if (in.read(&extra, 1))
    fail(ErrorCategory::FormatError, "trailing bytes after NPY payload: " + path);
  return buf;
}

inline std::vector<double> read_float_payload(std::ifstream& in, const Header& h,
                                              std::size_t count, const std::string& path) {
  std::vector<double> values;
  if (h.descr == "<f4") {
    const auto raw = read_payload<float>(in, count, path);
    values.assign(raw.begin(), raw.end());
  } else if (h.descr == "<f8") {
    values = read_payload<double>(in, count, path);
  } else {
    fail(ErrorCategory::FormatError, "unsupported dtype '" + h.descr + "' (want <f4 or <f8): " + path);
  }
  for (double v : values)
    if (!std::isfinite(v)) fail(ErrorCategory::InvalidValue, "non-finite value in " + path);
  return values;
}

}  // namespace detail

// Loads an activation tensor. 2 <= ndim <= 4; missing trailing dims are
// treated as size 1, so a (b, c) matrix reads as (b, c, 1, 1).
inline ActivationTensor read_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::IoError, "cannot open: " + path);
  const Header h = detail::read_header(in, path);
  if (h.fortran_order)
    fail(ErrorCategory::UnsupportedLayout, "fortran_order=True not supported: " + path);
  if (h.shape.size() < 2 || h.shape.size() > 4)
    fail(ErrorCategory::FormatError,
         "tensor ndim must be 2..4, got " + std::to_string(h.shape.size()) + ": " + path);
  std::array<std::size_t, 4> dims{1, 1, 1, 1};
  for (std::size_t i = 0; i < h.shape.size(); ++i) dims[i] = h.shape[i];
  for (std::size_t d : dims)
    if (d < 1) fail(ErrorCategory::FormatError, "zero-sized dimension: " + path);
  ActivationTensor t(dims[0], dims[1], dims[2], dims[3],
                     h.descr == "<f4" ? Dtype::F32 : Dtype::F64);
  t.data = detail::read_float_payload(in, h, t.size(), path);
  return t;
}

// Writes a tensor as v1.0 with an explicit 4-d shape.
inline void write_tensor(const ActivationTensor& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCategory::IoError, "cannot write: " + path);
  detail::write_header(out, t.dtype == Dtype::F32 ? "<f4" : "<f8", {t.b, t.c, t.h, t.w});
  if (t.dtype == Dtype::F32) {
    std::vector<float> raw(t.data.size());
    for (std::size_t i = 0; i < t.data.size(); ++i) raw[i] = static_cast<float>(t.data[i]);
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size() * sizeof(float)));
  } else {
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!out) fail(ErrorCategory::IoError, "write failed: " + path);
}

// Matrices (consistency matrices, pooled features, weights) are stored 2-d.
inline Matrix read_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::IoError, "cannot open: " + path);
  const Header h = detail::read_header(in, path);
  if (h.fortran_order)
    fail(ErrorCategory::UnsupportedLayout, "fortran_order=True not supported: " + path);
  std::size_t rows = 0, cols = 0;
  if (h.shape.size() == 1) {
    rows = h.shape[0];
    cols = 1;
  } else if (h.shape.size() == 2) {
    rows = h.shape[0];
    cols = h.shape[1];
  } else {
    fail(ErrorCategory::FormatError,
         "matrix ndim must be 1 or 2, got " + std::to_string(h.shape.size()) + ": " + path);
  }
  Matrix m(rows, cols);
  m.data() = detail::read_float_payload(in, h, rows * cols, path);
  return m;
}

inline void write_matrix(const Matrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCategory::IoError, "cannot write: " + path);
  detail::write_header(out, "<f8", {m.rows(), m.cols()});
  out.write(reinterpret_cast<const char*>(m.data().data()),
            static_cast<std::streamsize>(m.data().size() * sizeof(double)));
  if (!out) fail(ErrorCategory::IoError, "write failed: " + path);
}

// Label vectors: shape (b,), '<i4' or '<i8'.
inline std::vector<std::int64_t> read_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::IoError, "cannot open: " + path);
  const Header h = detail::read_header(in, path);
  if (h.fortran_order)
    fail(ErrorCategory::UnsupportedLayout, "fortran_order=True not supported: " + path);
  if (h.shape.size() != 1)
    fail(ErrorCategory::FormatError, "labels must be 1-d: " + path);
  const std::size_t n = h.shape[0];
  if (h.descr == "<i4") {
    const auto raw = detail::read_payload<std::int32_t>(in, n, path);
    return {raw.begin(), raw.end()};
  }
  if (h.descr == "<i8") return detail::read_payload<std::int64_t>(in, n, path);
  fail(ErrorCategory::FormatError,
       "unsupported label dtype '" + h.descr + "' (want <i4 or <i8): " + path);
}

inline void write_labels(const std::vector<std::int64_t>& labels, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCategory::IoError, "cannot write: " + path);
  detail::write_header(out, "<i8", {labels.size()});
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size() * sizeof(std::int64_t)));
  if (!out) fail(ErrorCategory::IoError, "write failed: " + path);
}

}  // namespace npy

// Spec-facing aliases on the kcd namespace.
inline ActivationTensor read_npy(const std::string& path) { return npy::read_tensor(path); }
inline void write_npy(const ActivationTensor& t, const std::string& path) {
  npy::write_tensor(t, path);
}

}  // namespace kcd
