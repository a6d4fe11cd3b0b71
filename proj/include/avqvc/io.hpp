#pragma once

#include <unistd.h>

#include <atomic>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>

#include "avqvc/error.hpp"
#include "avqvc/tensor.hpp"

namespace avqvc {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes to a sibling temp file then renames, so readers never observe a
// partially written file.
inline void write_file_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  static std::atomic<unsigned> counter{0};
  tmp += ".tmp." + std::to_string(::getpid()) + "." +
         std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()) % 100000) + "." +
         std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::io, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

// Minimal NumPy .npy (format 1.0) support for 2-D little-endian float64
// arrays, which is what the feature cache and codebook export use. Reading
// also accepts float32.
namespace npy {

inline std::string encode(const Matrix& m) {
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" +
                       std::to_string(m.rows()) + ", " + std::to_string(m.cols()) + "), }";
  // magic(6) + version(2) + len(2) + header + '\n' padded to 64 bytes
  std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header += '\n';
  std::string out("\x93NUMPY\x01\x00", 8);
  auto hlen = static_cast<std::uint16_t>(header.size());
  out += static_cast<char>(hlen & 0xff);
  out += static_cast<char>(hlen >> 8);
  out += header;
  out.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * m.size());
  return out;
}

inline Matrix decode(const std::string& bytes, const std::string& origin = "<npy>") {
  auto fail = [&](const std::string& why) { return Error(ErrorKind::decode, origin + ": " + why); };
  if (bytes.size() < 10 || bytes.compare(0, 6, "\x93NUMPY") != 0) throw fail("not an npy file");
  std::size_t hlen = 0, hstart = 0;
  if (bytes[6] == 1) {
    hlen = static_cast<unsigned char>(bytes[8]) | (static_cast<unsigned char>(bytes[9]) << 8);
    hstart = 10;
  } else if (bytes[6] == 2 || bytes[6] == 3) {
    if (bytes.size() < 12) throw fail("truncated header");
    std::uint32_t l = 0;
    std::memcpy(&l, bytes.data() + 8, 4);
    hlen = l;
    hstart = 12;
  } else {
    throw fail("unsupported npy version");
  }
  if (bytes.size() < hstart + hlen) throw fail("truncated header");
  std::string header = bytes.substr(hstart, hlen);
  bool f8 = header.find("'<f8'") != std::string::npos;
  bool f4 = header.find("'<f4'") != std::string::npos;
  if (!f8 && !f4) throw fail("only little-endian float32/float64 arrays are supported");
  if (header.find("'fortran_order': False") == std::string::npos) throw fail("fortran order not supported");
  auto lp = header.find('(', header.find("'shape'"));
  auto rp = header.find(')', lp);
  if (lp == std::string::npos || rp == std::string::npos) throw fail("missing shape");
  std::string shape = header.substr(lp + 1, rp - lp - 1);
  std::vector<long long> dims;
  std::stringstream ss(shape);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.find_first_not_of(" ") == std::string::npos) continue;
    dims.push_back(std::stoll(tok));
  }
  if (dims.size() == 1) dims.push_back(1);
  if (dims.size() != 2) throw fail("expected a 2-D array");
  const std::size_t count = static_cast<std::size_t>(dims[0] * dims[1]);
  const std::size_t width = f8 ? 8 : 4;
  const std::size_t data_start = hstart + hlen;
  if (bytes.size() != data_start + count * width) throw fail("payload size does not match shape");
  Matrix m(dims[0], dims[1]);
  if (f8) {
    std::memcpy(m.data(), bytes.data() + data_start, count * 8);
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      float v;
      std::memcpy(&v, bytes.data() + data_start + i * 4, 4);
      m.data()[i] = v;
    }
  }
  return m;
}

inline void save(const fs::path& path, const Matrix& m) { write_file_atomic(path, encode(m)); }

inline Matrix load(const fs::path& path) { return decode(read_file(path), path.string()); }

}  // namespace npy
}  // namespace avqvc
