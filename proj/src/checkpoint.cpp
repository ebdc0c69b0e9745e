#include "docrec/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace docrec {

namespace {

constexpr char kMagic[8] = {'D', 'O', 'C', 'R', 'E', 'C', 'K', '1'};

template <typename U>
void put(std::string& out, U v) {
    static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
    unsigned char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(U));
    out.append(reinterpret_cast<const char*>(buf), sizeof(U));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename U>
    U get() {
        need(sizeof(U));
        unsigned char buf[sizeof(U)];
        std::memcpy(buf, bytes_.data() + pos_, sizeof(U));
        if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(U));
        pos_ += sizeof(U);
        U v;
        std::memcpy(&v, buf, sizeof(U));
        return v;
    }

    std::string take(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw std::runtime_error("checkpoint truncated");
    }
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
    std::string out(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.metadata.size()));
    out += ckpt.metadata;
    put<std::uint64_t>(out, ckpt.step);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size() + ckpt.moment1.size() + ckpt.moment2.size()));
    std::uint8_t group = 0;
    for (const auto* arrays : {&ckpt.params, &ckpt.moment1, &ckpt.moment2}) {
        for (const auto& [name, m] : *arrays) {
            put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
            out += name;
            put<std::uint8_t>(out, group);
            put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
            put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
            for (Eigen::Index i = 0; i < m.size(); ++i) put<float>(out, m.data()[i]);
        }
        ++group;
    }
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    if (r.take(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) throw std::runtime_error("not a docrec checkpoint");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.metadata = r.take(r.get<std::uint32_t>());
    ckpt.step = r.get<std::uint64_t>();
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t a = 0; a < count; ++a) {
        std::string name = r.take(r.get<std::uint32_t>());
        const auto group = r.get<std::uint8_t>();
        const auto rows = r.get<std::uint32_t>();
        const auto cols = r.get<std::uint32_t>();
        ad::Matrix<float> m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.get<float>();
        switch (group) {
            case 0: ckpt.params[name] = std::move(m); break;
            case 1: ckpt.moment1[name] = std::move(m); break;
            case 2: ckpt.moment2[name] = std::move(m); break;
            default: throw std::runtime_error("bad array group in checkpoint");
        }
    }
    if (!r.done()) throw std::runtime_error("trailing bytes in checkpoint");
    return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    const auto bytes = encode_checkpoint(ckpt);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return decode_checkpoint(ss.str());
}

}  // namespace docrec
