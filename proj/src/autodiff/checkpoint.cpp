/*
 * Copyright 2026 The robnas Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "robnas/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace robnas {

namespace {

constexpr std::array<char, 4> kMagic{'R', 'B', 'N', 'T'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
      (std::uint32_t{b[3]} << 24);
  return true;
}

std::uint32_t need_u32(std::istream& is, const char* what) {
  std::uint32_t v = 0;
  if (!get_u32(is, v)) throw CheckpointError(std::string("checkpoint truncated reading ") + what);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& os, const std::vector<NamedTensor>& records) {
  os.write(kMagic.data(), kMagic.size());
  put_u32(os, kCheckpointVersion);
  for (const auto& rec : records) {
    put_u32(os, static_cast<std::uint32_t>(rec.name.size()));
    os.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
    put_u32(os, static_cast<std::uint32_t>(rec.tensor.rank()));
    for (auto d : rec.tensor.shape()) put_u32(os, static_cast<std::uint32_t>(d));
    for (float f : rec.tensor.data()) put_u32(os, std::bit_cast<std::uint32_t>(f));
  }
  if (!os) throw CheckpointError("checkpoint write failed");
}

std::vector<NamedTensor> read_checkpoint(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw CheckpointError("checkpoint: bad magic (expected RBNT)");
  }
  const std::uint32_t version = need_u32(is, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  std::vector<NamedTensor> out;
  while (is.peek() != std::char_traits<char>::eof()) {
    const std::uint32_t name_len = need_u32(is, "name length");
    NamedTensor rec;
    rec.name.resize(name_len);
    if (!is.read(rec.name.data(), name_len)) throw CheckpointError("checkpoint truncated reading name");
    const std::uint32_t rank = need_u32(is, "rank");
    Shape shape(rank);
    for (auto& d : shape) d = need_u32(is, "shape");
    rec.tensor = Tensor(shape);
    for (auto& f : rec.tensor.data()) f = std::bit_cast<float>(need_u32(is, rec.name.c_str()));
    out.push_back(std::move(rec));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& records) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open " + path.string() + " for writing");
  write_checkpoint(os, records);
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

}  // namespace robnas
