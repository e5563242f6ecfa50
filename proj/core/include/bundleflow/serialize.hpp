#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "bundleflow/common.hpp"

namespace bundleflow {

/// Little-endian binary writer for checkpoint containers. The format is
/// deliberately dumb: fixed-width scalars and length-prefixed blobs, so two
/// runs that produce the same values produce the same bytes.
class BinWriter {
public:
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }

    void str(const std::string& s) {
        u64(s.size());
        raw(s.data(), s.size());
    }

    void vec(const std::vector<double>& v) {
        u64(v.size());
        raw(v.data(), v.size() * sizeof(double));
    }

    const std::vector<char>& bytes() const { return buf_; }

    void write_file(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for write: " + path);
        out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
        if (!out) throw IoError("write failed: " + path);
    }

private:
    void raw(const void* p, std::size_t n) {
        const char* c = static_cast<const char*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }
    std::vector<char> buf_;
};

class BinReader {
public:
    explicit BinReader(std::vector<char> bytes) : buf_(std::move(bytes)) {}

    static BinReader from_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open for read: " + path);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        return BinReader(std::move(bytes));
    }

    std::uint32_t u32() { return get<std::uint32_t>(); }
    std::uint64_t u64() { return get<std::uint64_t>(); }
    double f64() { return get<double>(); }

    std::string str() {
        const std::uint64_t n = u64();
        check(n);
        std::string s(buf_.data() + pos_, n);
        pos_ += n;
        return s;
    }

    std::vector<double> vec() {
        const std::uint64_t n = u64();
        check(n * sizeof(double));
        std::vector<double> v(n);
        std::memcpy(v.data(), buf_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
        return v;
    }

    bool at_end() const { return pos_ == buf_.size(); }

private:
    template <typename T>
    T get() {
        check(sizeof(T));
        T v;
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void check(std::size_t n) const {
        if (pos_ + n > buf_.size()) throw IoError("truncated checkpoint container");
    }
    std::vector<char> buf_;
    std::size_t pos_ = 0;
};

}  // namespace bundleflow
