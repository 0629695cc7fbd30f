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
#ifndef FEDTALK_BINARY_IO_H_
#define FEDTALK_BINARY_IO_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "absl/status/status.h"
#include "absl/status/statusor.h"

namespace fedtalk {

// Little-endian encoder for the checkpoint and world files, independent of
// host byte order.
class BinaryWriter {
 public:
  void Magic(std::string_view magic) { data_.append(magic); }
  void U64(uint64_t value);
  void F64(double value);
  void F64s(std::span<const double> values);

  const std::string& data() const { return data_; }

 private:
  std::string data_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::string_view data) : data_(data) {}

  absl::Status ExpectMagic(std::string_view magic);
  absl::StatusOr<uint64_t> U64();
  absl::StatusOr<double> F64();
  absl::Status F64s(std::span<double> out);
  bool AtEnd() const { return offset_ == data_.size(); }

 private:
  std::string_view data_;
  size_t offset_ = 0;
};

absl::Status WriteBinaryFile(const std::string& path, std::string_view data);
absl::StatusOr<std::string> ReadBinaryFile(const std::string& path);

// 64-bit FNV-1a.
uint64_t Fnv1a64(std::string_view data);

}  // namespace fedtalk

#endif  // FEDTALK_BINARY_IO_H_
