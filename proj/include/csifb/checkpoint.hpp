// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "csifb/tensor.hpp"

// Named-tensor container on disk: magic "CSIFBCK1", little-endian u32
// entry count, then per entry a length-prefixed name, u32 rank, u32 dims,
// and the f32 payload. Everything a model needs to resume inference goes
// through state_tensors().

namespace csifb {

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, Tensor<float>*>>& entries);

std::map<std::string, Tensor<float>> load_tensors(const std::string& path);

// Copies loaded tensors into the destination views. Every destination name
// must be present with a matching shape; extra file entries are ignored.
void assign_state(const std::map<std::string, Tensor<float>>& loaded,
                  const std::vector<std::pair<std::string, Tensor<float>*>>& state);

}  // namespace csifb
