#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace jbshield {

/// NFC-normalize a UTF-8 string.
std::string nfc(std::string_view utf8);

/// Canonical text form used for dedup keys, cache keys and mock embeddings:
/// NFC, then trim ASCII whitespace at both ends and collapse internal runs
/// of ASCII whitespace to single spaces.
std::string normalize_text(std::string_view utf8);

bool is_valid_utf8(std::string_view bytes);

/// FNV-1a, 64-bit.
std::uint64_t fnv1a64(std::string_view bytes);

/// 16 lowercase hex digits.
std::string hex64(std::uint64_t v);

/// hex64(fnv1a64(normalize_text(text))) — the cache key for a text.
std::string text_key(std::string_view text);

}  // namespace jbshield
