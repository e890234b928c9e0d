#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace vr {

// One named tensor as stored on disk. Values are held as doubles in memory
// but the container is float32, so a write/read round trip quantizes.
struct NamedTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> values;
};

// nearest float32-representable double
double quantize_f32(double v);

// Container layout: magic "VRTF1", then per tensor: name length (u64 LE),
// UTF-8 name bytes, rank (u64 LE), extents (u64 LE each), values (f32 LE).
// Tensors are read back in the order written, until end of stream.
void write_vrtf(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_vrtf(std::istream& in);

void write_vrtf_file(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_vrtf_file(const std::string& path);

// little-endian scalar I/O shared with the checkpoint header
void write_u64(std::ostream& out, uint64_t v);
uint64_t read_u64(std::istream& in);

}  // namespace vr
