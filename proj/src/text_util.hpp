#pragma once

#include <charconv>
#include <filesystem>
#include <string>
#include <string_view>

namespace pheno::detail {

inline char lower_ascii(char c) noexcept {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

inline std::string to_lower(std::string_view text) {
    std::string out(text);
    for (auto& c : out) c = lower_ascii(c);
    return out;
}

inline std::string_view trim(std::string_view text) noexcept {
    constexpr std::string_view kSpace = " \t\r\n\f\v";
    const auto first = text.find_first_not_of(kSpace);
    if (first == std::string_view::npos) return {};
    const auto last = text.find_last_not_of(kSpace);
    return text.substr(first, last - first + 1);
}

/// Shortest representation that round-trips exactly.
inline std::string format_double(double value) {
    char buffer[32];
    auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
    return std::string(buffer, ptr);
}

std::string read_file(const std::filesystem::path& path);

/// Write to "<path>.tmp" then rename over path.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace pheno::detail
