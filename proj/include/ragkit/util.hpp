#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ragkit {

// Error taxonomy. ConfigError maps to exit code 2 at the CLI boundary,
// everything else to 1.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};
struct ParseError : Error {
    using Error::Error;
};
struct GatewayError : Error {
    using Error::Error;
};
struct RetrievalError : Error {
    using Error::Error;
};
struct ContractError : Error {
    using Error::Error;
};

// A whitespace token together with its byte span in the source string.
struct TokenSpan {
    std::string_view text;
    std::size_t begin = 0;
    std::size_t end = 0;
};

inline bool is_space_byte(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Whitespace-split tokens with byte offsets. This is the project-wide token
// proxy: cost accounting, chunking, and mask alignment all use it.
std::vector<TokenSpan> tokenize_ws(std::string_view text);

inline std::size_t count_tokens(std::string_view text) {
    return tokenize_ws(text).size();
}

std::string_view trim_view(std::string_view s);
inline std::string trim(std::string_view s) {
    return std::string(trim_view(s));
}

std::string to_lower(std::string_view s);

// Lowercase, trim, collapse runs of whitespace to single spaces.
std::string normalize_ws(std::string_view s);

// FNV-1a 64-bit; the project's stable hash (config hashes, prompt hashes).
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ull);
std::string to_hex(std::uint64_t v);

std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::string_view contents);

}  // namespace ragkit
