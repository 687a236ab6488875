#include "tgrad/tgrd_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace tgrad {

namespace {

constexpr std::array<char, 4> kMagic{'T', 'G', 'R', 'D'};

void put_u64(std::ostream& os, std::uint64_t v) {
    std::array<char, 8> b{};
    for (int i = 0; i < 8; ++i) {
        b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    }
    os.write(b.data(), 8);
}

std::uint64_t get_u64(std::istream& is) {
    std::array<unsigned char, 8> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), 8)) {
        throw ValidationError("TGRD: truncated file");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    }
    return v;
}

void put_f64(std::ostream& os, double x) { put_u64(os, std::bit_cast<std::uint64_t>(x)); }
double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

template <TensorScalar T> void put_scalar(std::ostream& os, T x) {
    if constexpr (is_complex_v<T>) {
        put_f64(os, x.real());
        put_f64(os, x.imag());
    } else {
        put_f64(os, x);
    }
}

template <TensorScalar T> T get_scalar(std::istream& is) {
    if constexpr (is_complex_v<T>) {
        const double re = get_f64(is);
        const double im = get_f64(is);
        return {re, im};
    } else {
        return get_f64(is);
    }
}

template <TensorScalar T> constexpr std::uint8_t dtype_code() { return is_complex_v<T> ? 1 : 0; }

void put_header(std::ostream& os, std::uint8_t dtype, const Shape& shape) {
    if (shape.empty() || shape.size() > 255) {
        throw ValidationError("TGRD: order must be in [1, 255]");
    }
    os.write(kMagic.data(), 4);
    const char meta[3] = {static_cast<char>(kTgrdVersion), static_cast<char>(dtype),
                          static_cast<char>(shape.size())};
    os.write(meta, 3);
    for (auto n : shape) {
        put_u64(os, n);
    }
}

struct Header {
    std::uint8_t dtype = 0;
    Shape shape;
};

Header get_header(std::istream& is) {
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), 4) || magic != kMagic) {
        throw ValidationError("TGRD: bad magic");
    }
    unsigned char meta[3];
    if (!is.read(reinterpret_cast<char*>(meta), 3)) {
        throw ValidationError("TGRD: truncated header");
    }
    if (meta[0] != kTgrdVersion) {
        throw ValidationError("TGRD: unsupported version " + std::to_string(meta[0]));
    }
    if (meta[1] > 1) {
        throw ValidationError("TGRD: unknown dtype " + std::to_string(meta[1]));
    }
    if (meta[2] == 0) {
        throw ValidationError("TGRD: order 0");
    }
    Header h;
    h.dtype = meta[1];
    for (int k = 0; k < meta[2]; ++k) {
        const auto n = get_u64(is);
        if (n == 0 || n > (std::uint64_t{1} << 40)) {
            throw ValidationError("TGRD: implausible dimension " + std::to_string(n));
        }
        h.shape.push_back(static_cast<std::size_t>(n));
    }
    return h;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw ValidationError("cannot open for writing: " + path.string());
    }
    return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw ValidationError("cannot open for reading: " + path.string());
    }
    return is;
}

template <TensorScalar T> Tensor<T> read_payload(std::istream& is, Shape shape) {
    std::vector<T> data(element_count(shape));
    for (auto& x : data) {
        x = get_scalar<T>(is);
    }
    return Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace

template <TensorScalar T> void write_tgrd(std::ostream& os, const Tensor<T>& t) {
    put_header(os, dtype_code<T>(), t.shape());
    for (const auto& x : t.data()) {
        put_scalar(os, x);
    }
    if (!os) {
        throw ValidationError("TGRD: write failed");
    }
}

template <TensorScalar T> void write_tgrd(const std::filesystem::path& path, const Tensor<T>& t) {
    auto os = open_out(path);
    write_tgrd(os, t);
}

template <TensorScalar T> Tensor<T> read_tgrd(std::istream& is) {
    auto h = get_header(is);
    if (h.dtype != dtype_code<T>()) {
        throw ValidationError("TGRD: dtype mismatch");
    }
    return read_payload<T>(is, std::move(h.shape));
}

template <TensorScalar T> Tensor<T> read_tgrd(const std::filesystem::path& path) {
    auto is = open_in(path);
    return read_tgrd<T>(is);
}

std::variant<RealTensor, ComplexTensor> read_tgrd_any(const std::filesystem::path& path) {
    auto is = open_in(path);
    auto h = get_header(is);
    if (h.dtype == 1) {
        return read_payload<Complex>(is, std::move(h.shape));
    }
    return read_payload<double>(is, std::move(h.shape));
}

template <TensorScalar T>
void write_tgrd_sparse(const std::filesystem::path& path, const Shape& shape, const std::vector<std::uint64_t>& offsets,
                       const std::vector<T>& values) {
    if (offsets.size() != values.size()) {
        throw ValidationError("TGRD sparse: offsets/values length mismatch");
    }
    const std::size_t n = element_count(shape);
    for (auto o : offsets) {
        if (o >= n) {
            throw ValidationError("TGRD sparse: offset " + std::to_string(o) + " outside " + shape_string(shape));
        }
    }
    auto os = open_out(path);
    put_header(os, dtype_code<T>(), shape);
    put_u64(os, offsets.size());
    for (auto o : offsets) {
        put_u64(os, o);
    }
    for (const auto& v : values) {
        put_scalar(os, v);
    }
    if (!os) {
        throw ValidationError("TGRD: write failed");
    }
}

template <TensorScalar T> SparseFile<T> read_tgrd_sparse(const std::filesystem::path& path) {
    auto is = open_in(path);
    auto h = get_header(is);
    if (h.dtype != dtype_code<T>()) {
        throw ValidationError("TGRD: dtype mismatch");
    }
    SparseFile<T> f;
    f.shape = std::move(h.shape);
    const auto total = element_count(f.shape);
    const auto nnz = get_u64(is);
    if (nnz > total) {
        throw ValidationError("TGRD sparse: nnz exceeds element count");
    }
    f.offsets.resize(nnz);
    for (auto& o : f.offsets) {
        o = get_u64(is);
        if (o >= total) {
            throw ValidationError("TGRD sparse: offset out of bounds");
        }
    }
    f.values.resize(nnz);
    for (auto& v : f.values) {
        v = get_scalar<T>(is);
    }
    return f;
}

#define TGRAD_INSTANTIATE(T)                                                                         \
    template void write_tgrd(std::ostream&, const Tensor<T>&);                                       \
    template void write_tgrd(const std::filesystem::path&, const Tensor<T>&);                        \
    template Tensor<T> read_tgrd(std::istream&);                                                     \
    template Tensor<T> read_tgrd(const std::filesystem::path&);                                      \
    template void write_tgrd_sparse(const std::filesystem::path&, const Shape&,                      \
                                    const std::vector<std::uint64_t>&, const std::vector<T>&);       \
    template SparseFile<T> read_tgrd_sparse(const std::filesystem::path&);

TGRAD_INSTANTIATE(double)
TGRAD_INSTANTIATE(Complex)

#undef TGRAD_INSTANTIATE

}  // namespace tgrad
