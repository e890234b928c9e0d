#include "vr/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "vr/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");
static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559,
              "serialization assumes IEEE-754 float32");

namespace vr {

namespace {

constexpr char kMagic[5] = {'V', 'R', 'T', 'F', '1'};
constexpr uint64_t kMaxRank = 8;
constexpr uint64_t kMaxElems = 1ull << 30;
constexpr uint64_t kMaxNameLen = 1ull << 16;

void read_exact(std::istream& in, char* buf, size_t len, const char* what) {
    in.read(buf, static_cast<std::streamsize>(len));
    if (static_cast<size_t>(in.gcount()) != len) {
        throw ParseError(std::string("tensor container truncated while reading ") + what);
    }
}

}  // namespace

double quantize_f32(double v) {
    return static_cast<double>(static_cast<float>(v));
}

void write_u64(std::ostream& out, uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

uint64_t read_u64(std::istream& in) {
    uint64_t v = 0;
    read_exact(in, reinterpret_cast<char*>(&v), sizeof v, "u64 field");
    return v;
}

void write_vrtf(std::ostream& out, const std::vector<NamedTensor>& tensors) {
    out.write(kMagic, sizeof kMagic);
    for (const NamedTensor& t : tensors) {
        write_u64(out, t.name.size());
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        write_u64(out, t.shape.size());
        uint64_t count = 1;
        for (int d : t.shape) {
            if (d < 0) throw ValueError("write_vrtf: negative extent in " + t.name);
            write_u64(out, static_cast<uint64_t>(d));
            count *= static_cast<uint64_t>(d);
        }
        if (count != t.values.size()) {
            throw ValueError("write_vrtf: " + t.name + " has " +
                             std::to_string(t.values.size()) + " values for " +
                             std::to_string(count) + " slots");
        }
        for (double v : t.values) {
            const float f = static_cast<float>(v);
            out.write(reinterpret_cast<const char*>(&f), sizeof f);
        }
    }
    if (!out) throw IoError("write_vrtf: stream write failed");
}

std::vector<NamedTensor> read_vrtf(std::istream& in) {
    char magic[sizeof kMagic];
    read_exact(in, magic, sizeof magic, "magic");
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw ParseError("tensor container has wrong magic bytes");
    }
    std::vector<NamedTensor> tensors;
    while (true) {
        // peek for clean EOF between records
        const int c = in.peek();
        if (c == std::char_traits<char>::eof()) break;
        NamedTensor t;
        const uint64_t name_len = read_u64(in);
        if (name_len > kMaxNameLen) throw ParseError("tensor name length implausibly large");
        t.name.resize(name_len);
        read_exact(in, t.name.data(), name_len, "tensor name");
        const uint64_t rank = read_u64(in);
        if (rank > kMaxRank) throw ParseError("tensor rank implausibly large");
        uint64_t count = 1;
        for (uint64_t i = 0; i < rank; ++i) {
            const uint64_t d = read_u64(in);
            if (d > kMaxElems || count * std::max<uint64_t>(d, 1) > kMaxElems) {
                throw ParseError("tensor extents implausibly large");
            }
            t.shape.push_back(static_cast<int>(d));
            count *= d;
        }
        t.values.resize(count);
        for (uint64_t i = 0; i < count; ++i) {
            float f = 0.0f;
            read_exact(in, reinterpret_cast<char*>(&f), sizeof f, "tensor values");
            t.values[i] = static_cast<double>(f);
        }
        tensors.push_back(std::move(t));
    }
    return tensors;
}

void write_vrtf_file(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    write_vrtf(out, tensors);
    out.flush();
    if (!out) throw IoError("write to " + path + " failed");
}

std::vector<NamedTensor> read_vrtf_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path + " for reading");
    return read_vrtf(in);
}

}  // namespace vr
