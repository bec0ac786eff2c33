#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ifdiff {

inline constexpr int kNumTypes = 20;
inline constexpr int kNumSsClasses = 8;

// Alphabetical one-letter order: A=0 ... Y=19.
inline constexpr std::string_view kAlphabet = "ACDEFGHIKLMNPQRSTVWY";

std::optional<int> type_index(char letter);
char type_letter(int type);

// Throws ParseError on the first unknown letter.
std::vector<int> decode_sequence(std::string_view seq);
std::string encode_sequence(const std::vector<int>& types);

}  // namespace ifdiff
