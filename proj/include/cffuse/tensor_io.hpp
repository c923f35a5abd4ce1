#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "cffuse/tensor.hpp"

namespace cffuse {

// Binary tensor record: "CFT1", u8 rank, rank x u32 LE dims, f64 LE payload.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

/// Named tensor bundle: "CFCK", u32 count, then per entry u32 name length,
/// name bytes, tensor record. Entries are written in key order.
void save_bundle(const std::string& path, const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> load_bundle(const std::string& path);

}  // namespace cffuse
