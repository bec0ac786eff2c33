#include "ifdiff/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ifdiff/errors.h"

namespace ifdiff {

namespace {

constexpr char kMagic[8] = {'I', 'F', 'D', 'I', 'F', 'F', 'C', 'K'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
public:
    template <typename T>
    void pod(const T& v) {
        out_.append(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void bytes(const std::string& s) {
        pod<std::uint64_t>(s.size());
        out_.append(s);
    }
    void matrix(const ad::Matrix& m) { out_.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * m.size()); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(const std::string& in) : in_(in) {}

    template <typename T>
    T pod(const char* what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, in_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string bytes(const char* what) {
        const auto n = pod<std::uint64_t>(what);
        need(n, what);
        std::string s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    ad::Matrix matrix(std::uint64_t rows, std::uint64_t cols, const std::string& what) {
        const std::uint64_t count = rows * cols;
        need(count * sizeof(double), what.c_str());
        ad::Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        std::memcpy(m.data(), in_.data() + pos_, count * sizeof(double));
        pos_ += count * sizeof(double);
        return m;
    }
    bool done() const { return pos_ == in_.size(); }

private:
    void need(std::uint64_t n, const char* what) {
        if (n > in_.size() - pos_) throw CheckpointError(std::string("corrupt checkpoint: truncated while reading ") + what);
    }
    const std::string& in_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    for (char c : kMagic) w.pod(c);
    w.pod<std::uint32_t>(kCheckpointVersion);
    w.bytes(config_to_json(ckpt.model, ckpt.train));
    w.pod<std::uint64_t>(ckpt.step);
    w.pod<std::uint64_t>(ckpt.n_updates);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
        w.bytes(t.name);
        w.pod<std::uint64_t>(static_cast<std::uint64_t>(t.value.rows()));
        w.pod<std::uint64_t>(static_cast<std::uint64_t>(t.value.cols()));
        for (const auto* m : {&t.value, &t.grad, &t.m, &t.v}) {
            if (m->rows() != t.value.rows() || m->cols() != t.value.cols()) {
                throw CheckpointError("tensor " + t.name + ": optimizer state shape differs from value shape");
            }
            w.matrix(*m);
        }
    }
    return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    for (char c : kMagic) {
        if (r.pod<char>("magic") != c) throw CheckpointError("not a checkpoint file (bad magic)");
    }
    const auto version = r.pod<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    }
    Checkpoint ckpt;
    config_from_json(r.bytes("config"), ckpt.model, ckpt.train);
    ckpt.step = r.pod<std::uint64_t>("step");
    ckpt.n_updates = r.pod<std::uint64_t>("n_updates");
    const auto n = r.pod<std::uint32_t>("tensor count");
    ckpt.tensors.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        TensorRecord t;
        t.name = r.bytes("tensor name");
        const auto rows = r.pod<std::uint64_t>("rows");
        const auto cols = r.pod<std::uint64_t>("cols");
        t.value = r.matrix(rows, cols, t.name);
        t.grad = r.matrix(rows, cols, t.name);
        t.m = r.matrix(rows, cols, t.name);
        t.v = r.matrix(rows, cols, t.name);
        ckpt.tensors.push_back(std::move(t));
    }
    if (!r.done()) throw CheckpointError("corrupt checkpoint: trailing bytes");
    return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return decode_checkpoint(ss.str());
}

}  // namespace ifdiff
