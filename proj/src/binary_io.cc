/*
 * Copyright 2026 The fedtalk Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "fedtalk/binary_io.h"

#include <bit>
#include <fstream>
#include <iterator>

#include "absl/strings/str_cat.h"

namespace fedtalk {

void BinaryWriter::U64(uint64_t value) {
  for (int i = 0; i < 8; ++i) {
    data_.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

void BinaryWriter::F64(double value) { U64(std::bit_cast<uint64_t>(value)); }

void BinaryWriter::F64s(std::span<const double> values) {
  data_.reserve(data_.size() + 8 * values.size());
  for (double v : values) F64(v);
}

absl::Status BinaryReader::ExpectMagic(std::string_view magic) {
  if (data_.substr(offset_, magic.size()) != magic) {
    return absl::DataLossError(
        absl::StrCat("bad file magic, expected '", std::string(magic), "'"));
  }
  offset_ += magic.size();
  return absl::OkStatus();
}

absl::StatusOr<uint64_t> BinaryReader::U64() {
  if (data_.size() - offset_ < 8) {
    return absl::DataLossError("unexpected end of binary data");
  }
  uint64_t value = 0;
  for (int i = 0; i < 8; ++i) {
    value |= static_cast<uint64_t>(static_cast<unsigned char>(data_[offset_ + i]))
             << (8 * i);
  }
  offset_ += 8;
  return value;
}

absl::StatusOr<double> BinaryReader::F64() {
  absl::StatusOr<uint64_t> bits = U64();
  if (!bits.ok()) return bits.status();
  return std::bit_cast<double>(*bits);
}

absl::Status BinaryReader::F64s(std::span<double> out) {
  if ((data_.size() - offset_) / 8 < out.size()) {
    return absl::DataLossError("unexpected end of binary data");
  }
  for (double& v : out) v = *F64();
  return absl::OkStatus();
}

absl::Status WriteBinaryFile(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return absl::UnavailableError(absl::StrCat("cannot open ", path));
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) return absl::DataLossError(absl::StrCat("short write to ", path));
  return absl::OkStatus();
}

absl::StatusOr<std::string> ReadBinaryFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

uint64_t Fnv1a64(std::string_view data) {
  uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

}  // namespace fedtalk
