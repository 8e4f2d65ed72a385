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

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "emfs/base64.hpp"
#include "emfs/errors.hpp"
#include "emfs/sha256.hpp"

namespace emfs {

/// Header value marking the last message of a chain.
inline constexpr std::string_view chain_end = "-1";

/**
Email-safe text produced by encode8. `payload` holds only characters from
the base-64 alphabet plus '='; line breaks are added at serialization time
and never stored here. Sizes measured against the provider limit S count
payload octets only.
**/
struct encoded_text {
    std::string payload;

    std::size_t size() const noexcept { return payload.size(); }
    bool empty() const noexcept { return payload.empty(); }

    bool operator==(const encoded_text&) const = default;
};

/// Ordered file slices; concatenated in order they reproduce the source text.
using slice_list = std::vector<encoded_text>;

/**
A 64-character lowercase hexadecimal digest identifying one chain link.
**/
struct id_hash {
    static constexpr std::size_t length = 64;

    std::string value;

    bool operator==(const id_hash&) const = default;
};

/// True when `text` is a well-formed id-hash (64 lowercase hex characters).
inline bool is_id_hash(std::string_view text)
{
    if (text.size() != id_hash::length)
        return false;
    for (char c : text)
        if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f')))
            return false;
    return true;
}

/**
One link of a file chain. The wire subject is "<first_id> <filename>";
`next_id` is either an id-hash or the end-of-chain sentinel "-1". Storage
traffic is self-addressed, so `from` equals `to`.
**/
struct emfs_message {
    std::string from;
    std::string to;
    std::string first_id;
    std::string filename;
    std::string next_id;
    encoded_text body;

    std::string subject() const { return first_id + " " + filename; }
    bool last_in_chain() const { return next_id == chain_end; }

    bool operator==(const emfs_message&) const = default;
};

/**
Encodes raw bytes to email-safe text. Inverse of decode8.
**/
inline encoded_text encode8(std::string_view data)
{
    return encoded_text{base64::encode(data)};
}

/**
Decodes email-safe text (a full encoding or the in-order concatenation of
chain slices) back to the original bytes. Line breaks are tolerated.
Throws malformed_encoding on foreign characters or bad padding.
**/
inline std::string decode8(std::string_view text)
{
    return base64::decode(text);
}

inline std::string decode8(const encoded_text& text)
{
    return base64::decode(text.payload);
}

/**
Computes the id-hash of one chain link: SHA-256 over
filename NUL decimal(slice_index) NUL slice-octets. Hashing all three
inputs keeps ids distinct even when two slices carry identical content.
**/
inline id_hash hash_id(std::string_view filename, std::uint64_t slice_index, const encoded_text& slice)
{
    sha256 h;
    h.update(filename);
    h.update("\0", 1);
    h.update(std::to_string(slice_index));
    h.update("\0", 1);
    h.update(slice.payload);
    return id_hash{h.hex_digest()};
}

/**
Splits encoded text into slices of at most `limit_s` payload octets.
Produces max(1, ceil(size / limit_s)) slices: all but the last have size
exactly `limit_s`, and empty input yields one empty slice so that an empty
file still maps to a one-message chain.
**/
inline slice_list slice_encoded(const encoded_text& text, std::size_t limit_s)
{
    if (limit_s == 0)
        throw std::invalid_argument("slice_encoded: limit must be positive");
    slice_list slices;
    if (text.empty()) {
        slices.push_back(encoded_text{});
        return slices;
    }
    slices.reserve((text.size() + limit_s - 1) / limit_s);
    for (std::size_t pos = 0; pos < text.size(); pos += limit_s)
        slices.push_back(encoded_text{text.payload.substr(pos, limit_s)});
    return slices;
}

/**
Builds the message chain for a file: message i carries slices[i], links to
the id-hash of slice i+1, and the last message carries the "-1" sentinel.
Every subject starts with the id-hash of slice 0.
**/
inline std::vector<emfs_message> pack(std::string_view filename, const slice_list& slices,
                                      std::string_view self_address)
{
    if (slices.empty())
        throw std::invalid_argument("pack: slice list must be non-empty");
    std::vector<emfs_message> messages;
    messages.reserve(slices.size());
    const id_hash first = hash_id(filename, 0, slices[0]);
    const std::size_t last = slices.size() - 1;
    for (std::size_t i = 0; i <= last; i++) {
        std::string next{chain_end};
        if (i < last)
            next = hash_id(filename, i + 1, slices[i + 1]).value;
        emfs_message m;
        m.from = self_address;
        m.to = self_address;
        m.first_id = first.value;
        m.filename = filename;
        m.next_id = std::move(next);
        m.body = slices[i];
        messages.push_back(std::move(m));
    }
    return messages;
}

/**
Serializes a message to wire text: From, To, Subject, EMFS-Filename and
EMFS-Next headers, a blank line, then the body wrapped at 76 columns.
CRLF line endings throughout.
**/
inline std::string serialize(const emfs_message& m)
{
    std::string out;
    out.reserve(m.body.size() + m.filename.size() * 2 + 256);
    out += "From: " + m.from + "\r\n";
    out += "To: " + m.to + "\r\n";
    out += "Subject: " + m.subject() + "\r\n";
    out += "EMFS-Filename: " + m.filename + "\r\n";
    out += "EMFS-Next: " + m.next_id + "\r\n";
    out += "\r\n";
    out += base64::wrap_crlf(m.body.payload);
    return out;
}

namespace detail {

inline bool iequals(std::string_view a, std::string_view b)
{
    if (a.size() != b.size())
        return false;
    for (std::size_t i = 0; i < a.size(); i++) {
        char x = a[i], y = b[i];
        if (x >= 'A' && x <= 'Z')
            x = static_cast<char>(x - 'A' + 'a');
        if (y >= 'A' && y <= 'Z')
            y = static_cast<char>(y - 'A' + 'a');
        if (x != y)
            return false;
    }
    return true;
}

struct raw_headers {
    std::string from, to, subject, filename, next_id;
    bool has_filename = false, has_next = false;
    std::string_view body;
};

/// Body payload octets: line breaks do not count against the limit S.
inline std::uint64_t payload_octets(std::string_view body)
{
    std::uint64_t n = 0;
    for (char c : body)
        if (c != '\r' && c != '\n')
            n++;
    return n;
}

/// Splits wire text into the EMFS header fields and the body view.
inline raw_headers split_wire(std::string_view raw)
{
    raw_headers h;
    std::size_t pos = 0;
    while (pos < raw.size()) {
        std::size_t eol = raw.find('\n', pos);
        std::string_view line;
        std::size_t next;
        if (eol == std::string_view::npos) {
            line = raw.substr(pos);
            next = raw.size();
        } else {
            line = raw.substr(pos, eol - pos);
            next = eol + 1;
        }
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        if (line.empty()) {
            h.body = raw.substr(next);
            return h;
        }
        std::size_t colon = line.find(':');
        if (colon != std::string_view::npos) {
            std::string_view name = line.substr(0, colon);
            std::string_view value = line.substr(colon + 1);
            if (!value.empty() && value.front() == ' ')
                value.remove_prefix(1);
            if (iequals(name, "From"))
                h.from = value;
            else if (iequals(name, "To"))
                h.to = value;
            else if (iequals(name, "Subject"))
                h.subject = value;
            else if (iequals(name, "EMFS-Filename")) {
                h.filename = value;
                h.has_filename = true;
            } else if (iequals(name, "EMFS-Next")) {
                h.next_id = value;
                h.has_next = true;
            }
        }
        pos = next;
    }
    // no blank line: header-only message, empty body
    h.body = std::string_view{};
    return h;
}

} // namespace detail

/**
Parses wire text into an emfs_message. Requires both EMFS headers
(NotAnEmfsMessage otherwise) and a subject of the form
"<id-hash> <filename>" (MalformedHeader otherwise); the filename may
itself contain spaces.
**/
inline emfs_message parse_message(std::string_view raw)
{
    detail::raw_headers h = detail::split_wire(raw);
    if (!h.has_filename || !h.has_next)
        throw not_an_emfs_message("message lacks EMFS-Filename or EMFS-Next header");

    std::size_t space = h.subject.find(' ');
    std::string token = space == std::string::npos ? h.subject : h.subject.substr(0, space);
    if (!is_id_hash(token))
        throw malformed_header("subject does not start with an id-hash token: \"" + h.subject + "\"");
    std::string rest = space == std::string::npos ? std::string{} : h.subject.substr(space + 1);

    emfs_message m;
    m.from = std::move(h.from);
    m.to = std::move(h.to);
    m.first_id = std::move(token);
    m.filename = std::move(h.filename);
    m.next_id = std::move(h.next_id);
    m.body = encoded_text{base64::unwrap(h.body)};
    if (m.filename != rest)
        throw malformed_header("subject filename \"" + rest + "\" does not match EMFS-Filename \"" +
                               m.filename + "\"");
    return m;
}

} // namespace emfs
