#include "ifdiff/amino.h"

#include "ifdiff/errors.h"

namespace ifdiff {

std::optional<int> type_index(char letter) {
    auto pos = kAlphabet.find(letter);
    if (pos == std::string_view::npos) return std::nullopt;
    return static_cast<int>(pos);
}

char type_letter(int type) {
    if (type < 0 || type >= kNumTypes) throw ParseError("type index out of range: " + std::to_string(type));
    return kAlphabet[static_cast<std::size_t>(type)];
}

std::vector<int> decode_sequence(std::string_view seq) {
    std::vector<int> out;
    out.reserve(seq.size());
    for (std::size_t i = 0; i < seq.size(); ++i) {
        auto idx = type_index(seq[i]);
        if (!idx) {
            throw ParseError("unknown amino-acid letter '" + std::string(1, seq[i]) + "' at residue " +
                             std::to_string(i));
        }
        out.push_back(*idx);
    }
    return out;
}

std::string encode_sequence(const std::vector<int>& types) {
    std::string out;
    out.reserve(types.size());
    for (int t : types) out.push_back(type_letter(t));
    return out;
}

}  // namespace ifdiff
