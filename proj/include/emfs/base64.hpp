/*
 * Copyright 2026 The EMFS Authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "emfs/errors.hpp"

namespace emfs::base64 {

/// MIME line width for wrapped transfer encoding.
inline constexpr std::size_t mime_line_width = 76;

inline constexpr std::string_view alphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

namespace detail {

inline const std::array<std::int8_t, 256>& reverse_table()
{
    static const std::array<std::int8_t, 256> table = [] {
        std::array<std::int8_t, 256> t{};
        t.fill(-1);
        for (std::size_t i = 0; i < alphabet.size(); i++)
            t[static_cast<unsigned char>(alphabet[i])] = static_cast<std::int8_t>(i);
        return t;
    }();
    return table;
}

} // namespace detail

/**
Encodes raw bytes into the base-64 alphabet, no line breaks. Output length
is 4 * ceil(n / 3); padded with '=' as needed.
**/
inline std::string encode(std::string_view data)
{
    std::string out;
    out.reserve((data.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 3 <= data.size()) {
        std::uint32_t n = (static_cast<std::uint8_t>(data[i]) << 16) |
                          (static_cast<std::uint8_t>(data[i + 1]) << 8) |
                          static_cast<std::uint8_t>(data[i + 2]);
        out.push_back(alphabet[(n >> 18) & 0x3f]);
        out.push_back(alphabet[(n >> 12) & 0x3f]);
        out.push_back(alphabet[(n >> 6) & 0x3f]);
        out.push_back(alphabet[n & 0x3f]);
        i += 3;
    }
    std::size_t rest = data.size() - i;
    if (rest == 1) {
        std::uint32_t n = static_cast<std::uint8_t>(data[i]) << 16;
        out.push_back(alphabet[(n >> 18) & 0x3f]);
        out.push_back(alphabet[(n >> 12) & 0x3f]);
        out.append("==");
    } else if (rest == 2) {
        std::uint32_t n = (static_cast<std::uint8_t>(data[i]) << 16) |
                          (static_cast<std::uint8_t>(data[i + 1]) << 8);
        out.push_back(alphabet[(n >> 18) & 0x3f]);
        out.push_back(alphabet[(n >> 12) & 0x3f]);
        out.push_back(alphabet[(n >> 6) & 0x3f]);
        out.push_back('=');
    }
    return out;
}

/**
Decodes base-64 text back to raw bytes. CR and LF are ignored so wrapped
bodies decode directly. Throws malformed_encoding on characters outside
the alphabet, on interior padding, or when the length is not a multiple
of four.
**/
inline std::string decode(std::string_view text)
{
    std::string out;
    out.reserve(text.size() / 4 * 3);
    std::uint32_t acc = 0;
    int acc_bits = 0;
    std::size_t payload_len = 0;
    std::size_t pad_count = 0;
    for (char c : text) {
        if (c == '\r' || c == '\n')
            continue;
        if (c == '=') {
            pad_count++;
            payload_len++;
            if (pad_count > 2)
                throw malformed_encoding("base64: more than two padding characters");
            continue;
        }
        if (pad_count > 0)
            throw malformed_encoding("base64: data after padding");
        std::int8_t v = detail::reverse_table()[static_cast<unsigned char>(c)];
        if (v < 0)
            throw malformed_encoding(std::string("base64: illegal character 0x") +
                                     "0123456789abcdef"[(static_cast<unsigned char>(c) >> 4) & 0xf] +
                                     "0123456789abcdef"[static_cast<unsigned char>(c) & 0xf]);
        payload_len++;
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        acc_bits += 6;
        if (acc_bits >= 8) {
            acc_bits -= 8;
            out.push_back(static_cast<char>((acc >> acc_bits) & 0xff));
        }
    }
    if (payload_len % 4 != 0)
        throw malformed_encoding("base64: length not a multiple of four");
    return out;
}

/**
Wraps a payload string at `width` columns with CRLF line endings. Every
line, including the last, is CRLF-terminated; empty payload produces
empty output.
**/
inline std::string wrap_crlf(std::string_view payload, std::size_t width = mime_line_width)
{
    std::string out;
    if (payload.empty())
        return out;
    out.reserve(payload.size() + (payload.size() / width + 1) * 2);
    std::size_t pos = 0;
    while (pos < payload.size()) {
        std::size_t n = std::min(width, payload.size() - pos);
        out.append(payload.substr(pos, n));
        out.append("\r\n");
        pos += n;
    }
    return out;
}

/// Removes CR and LF octets, recovering the payload from wrapped text.
inline std::string unwrap(std::string_view wrapped)
{
    std::string out;
    out.reserve(wrapped.size());
    for (char c : wrapped)
        if (c != '\r' && c != '\n')
            out.push_back(c);
    return out;
}

} // namespace emfs::base64
