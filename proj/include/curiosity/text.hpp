#pragma once
// Lowercasing alphanumeric tokenizer shared by the fact index, the
// synthetic generator and the model vocabulary.

#include <string>
#include <string_view>
#include <vector>

namespace curiosity::text {

// UTF-8 aware tokenization: ASCII alphanumerics and any code point >= U+0080
// are word characters, everything else separates tokens. ASCII letters are
// lowercased; Latin-1 capitals (U+00C0..U+00DE except the multiplication
// sign) are folded to their lowercase forms. Invalid UTF-8 bytes act as
// separators.
inline std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  };

  std::size_t i = 0;
  const auto n = s.size();
  while (i < n) {
    unsigned char b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
      if ((b0 >= '0' && b0 <= '9') || (b0 >= 'a' && b0 <= 'z')) {
        cur.push_back(static_cast<char>(b0));
      } else if (b0 >= 'A' && b0 <= 'Z') {
        cur.push_back(static_cast<char>(b0 - 'A' + 'a'));
      } else {
        flush();
      }
      ++i;
      continue;
    }
    // Decode one multi-byte sequence.
    int len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    } else {
      flush();  // stray continuation byte
      ++i;
      continue;
    }
    if (i + len > n) {
      flush();
      ++i;
      continue;
    }
    bool valid = true;
    for (int k = 1; k < len; ++k) {
      unsigned char bk = static_cast<unsigned char>(s[i + k]);
      if ((bk & 0xC0) != 0x80) {
        valid = false;
        break;
      }
      cp = (cp << 6) | (bk & 0x3F);
    }
    if (!valid) {
      flush();
      ++i;
      continue;
    }
    i += len;
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) cp += 0x20;  // Latin-1 capitals
    // Re-encode the (possibly folded) code point.
    if (cp < 0x800) {
      cur.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      cur.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      cur.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      cur.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      cur.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      cur.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      cur.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      cur.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      cur.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  flush();
  return tokens;
}

}  // namespace curiosity::text
