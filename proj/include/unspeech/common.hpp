// Copyright (c) 2026 The unspeech-cpp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace unspeech {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Tensor, window or configuration shapes that do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

namespace io {

template <typename T>
void write_pod(std::ostream& os, const T& value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
void write_array(std::ostream& os, const T* data, std::size_t count) {
  os.write(reinterpret_cast<const char*>(data),
           static_cast<std::streamsize>(count * sizeof(T)));
}

inline void write_magic(std::ostream& os, std::string_view magic) {
  os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

/// Writes a u16 length prefix followed by the UTF-8 bytes.
inline void write_short_string(std::ostream& os, const std::string& s) {
  if (s.size() > 0xFFFF) throw InvalidArgument("identifier longer than 65535 bytes: " + s.substr(0, 32) + "...");
  write_pod(os, static_cast<std::uint16_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

/// Reads exactly `n` bytes or throws FormatError naming `what`.
inline void read_exact(std::istream& is, char* dst, std::size_t n,
                       std::string_view what) {
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw FormatError("truncated file while reading " + std::string(what));
}

template <typename T>
T read_pod(std::istream& is, std::string_view what) {
  T value{};
  read_exact(is, reinterpret_cast<char*>(&value), sizeof(T), what);
  return value;
}

template <typename T>
void read_array(std::istream& is, T* dst, std::size_t count,
                std::string_view what) {
  read_exact(is, reinterpret_cast<char*>(dst), count * sizeof(T), what);
}

inline std::string read_short_string(std::istream& is, std::string_view what) {
  const auto len = read_pod<std::uint16_t>(is, what);
  std::string s(len, '\0');
  read_exact(is, s.data(), len, what);
  return s;
}

inline void expect_magic(std::istream& is, std::string_view magic,
                         const std::string& path) {
  char buf[8] = {};
  is.read(buf, static_cast<std::streamsize>(magic.size()));
  if (static_cast<std::size_t>(is.gcount()) != magic.size() ||
      std::string_view(buf, magic.size()) != magic)
    throw FormatError(path + ": bad magic, expected \"" + std::string(magic) + "\"");
}

/// True when the stream has no more bytes.
inline bool at_eof(std::istream& is) {
  return is.peek() == std::char_traits<char>::eof();
}

}  // namespace io
}  // namespace unspeech
