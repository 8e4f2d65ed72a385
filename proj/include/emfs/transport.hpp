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
#include <cstdlib>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "emfs/codec.hpp"
#include "emfs/errors.hpp"

namespace emfs {

/// Default folder name under which an instance lives.
inline constexpr std::string_view default_root_folder = "EMFS";

/// Budget for headers and framing on top of the body payload limit S.
inline constexpr std::size_t message_overhead_budget = 1024;

/**
Transport endpoints and limits for one email service provider. The
password is never stored here: `credential_ref` names the environment
variable that holds it.
**/
struct provider_profile {
    std::string smtp_host;
    std::uint16_t smtp_port = 587;
    std::string imap_host;
    std::uint16_t imap_port = 143;
    std::string username;
    std::string credential_ref = "EMFS_PASSWORD";
    std::uint64_t size_limit_s = 25ull * 1024 * 1024;
    std::string root_folder{default_root_folder};
    bool use_tls = true;
};

/// Reads the password named by credential_ref; throws missing_credential.
inline std::string resolve_credential(const provider_profile& profile)
{
    const char* value = std::getenv(profile.credential_ref.c_str());
    if (value == nullptr)
        throw missing_credential("environment variable " + profile.credential_ref + " is not set");
    return value;
}

/**
A folder address, stored as path segments from the top of the account
namespace. EMFS directories always start at the instance root folder;
the account inbox is addressable as the special path returned by
`inbox()` so that freshly delivered messages can be relocated.
**/
class mailbox_path {
public:
    explicit mailbox_path(std::vector<std::string> segments) : segments_(std::move(segments))
    {
        if (segments_.empty())
            throw invalid_name("mailbox path must have at least one segment");
        for (const auto& s : segments_)
            validate_segment(s);
    }

    static mailbox_path root(std::string_view root_folder)
    {
        return mailbox_path({std::string(root_folder)});
    }

    static mailbox_path inbox() { return mailbox_path({"INBOX"}); }

    /**
    Parses a user-facing path ("a/b/c") into a folder address under
    `root_folder`. "", ".", and "/" address the root itself; one trailing
    slash is tolerated ("example/"); empty interior segments are invalid.
    **/
    static mailbox_path from_user_path(std::string_view root_folder, std::string_view user_path)
    {
        std::vector<std::string> segments{std::string(root_folder)};
        if (user_path == "." || user_path == "/" || user_path.empty())
            return mailbox_path(std::move(segments));
        if (user_path.front() == '/')
            user_path.remove_prefix(1);
        if (!user_path.empty() && user_path.back() == '/')
            user_path.remove_suffix(1);
        if (user_path.empty())
            throw invalid_name("directory path has an empty segment");
        std::size_t pos = 0;
        while (true) {
            std::size_t slash = user_path.find('/', pos);
            std::string_view seg = slash == std::string_view::npos ?
                                       user_path.substr(pos) :
                                       user_path.substr(pos, slash - pos);
            if (seg.empty())
                throw invalid_name("directory path has an empty segment");
            segments.emplace_back(seg);
            if (slash == std::string_view::npos)
                break;
            pos = slash + 1;
        }
        return mailbox_path(std::move(segments));
    }

    const std::vector<std::string>& segments() const noexcept { return segments_; }
    std::size_t depth() const noexcept { return segments_.size(); }
    const std::string& leaf() const noexcept { return segments_.back(); }
    bool is_toplevel() const noexcept { return segments_.size() == 1; }

    mailbox_path parent() const
    {
        if (is_toplevel())
            throw invalid_name("top-level folder has no parent");
        return mailbox_path(std::vector<std::string>(segments_.begin(), segments_.end() - 1));
    }

    mailbox_path child(std::string_view name) const
    {
        auto segs = segments_;
        segs.emplace_back(name);
        return mailbox_path(std::move(segs));
    }

    /// True when `other` equals this path or lives below it.
    bool contains(const mailbox_path& other) const
    {
        if (other.segments_.size() < segments_.size())
            return false;
        for (std::size_t i = 0; i < segments_.size(); i++)
            if (segments_[i] != other.segments_[i])
                return false;
        return true;
    }

    /// Folder name on the wire, e.g. "EMFS/example".
    std::string wire_name(char delimiter = '/') const
    {
        std::string out;
        for (std::size_t i = 0; i < segments_.size(); i++) {
            if (i > 0)
                out.push_back(delimiter);
            out += segments_[i];
        }
        return out;
    }

    /// User-facing rendering with the root shown as "/", e.g. "/example".
    std::string display() const
    {
        if (is_toplevel())
            return "/";
        std::string out;
        for (std::size_t i = 1; i < segments_.size(); i++) {
            out.push_back('/');
            out += segments_[i];
        }
        return out;
    }

    auto operator<=>(const mailbox_path&) const = default;

private:
    static void validate_segment(const std::string& segment)
    {
        if (segment.empty())
            throw invalid_name("folder name must not be empty");
        for (char c : segment)
            if (c == '/' || c == '\r' || c == '\n' || c == '\0')
                throw invalid_name("folder name \"" + segment + "\" contains a forbidden character");
    }

    std::vector<std::string> segments_;
};

/**
Identifies one stored message. `uid` is opaque and unique within its
mailbox for the lifetime of a session; moving a message yields a new
handle in the destination mailbox.
**/
struct message_handle {
    mailbox_path mailbox;
    std::uint64_t uid = 0;

    bool operator==(const message_handle&) const = default;
};

/**
Header-level view of a stored EMFS message, as returned by
session::list_messages. `body_size` counts body payload octets, line
breaks excluded.
**/
struct message_summary {
    std::string subject;
    std::string filename;
    std::string next_id;
    std::uint64_t body_size = 0;
    std::uint64_t raw_size = 0;
};

/**
One authenticated connection pair (SMTP send path + IMAP folder store).

A session is single-threaded: one operation in flight at a time. It may
be handed between threads but never shared. Operations issued on one
session observe their own writes.
**/
class session {
public:
    virtual ~session() = default;

    /// Creates a folder. The parent must exist; an existing folder is an error.
    virtual void create_folder(const mailbox_path& path) = 0;

    /// Makes a folder current, verifying it exists.
    virtual void select_folder(const mailbox_path& path) = 0;

    /// Lists the immediate child folders of `path`.
    virtual std::vector<mailbox_path> list_folders(const mailbox_path& path) = 0;

    /// Removes a childless folder together with its messages.
    virtual void delete_folder(const mailbox_path& path) = 0;

    /// Submits one message over the send path; it is delivered to the inbox.
    virtual void send_message(const emfs_message& message) = 0;

    /// Fetches the full wire text of a stored message.
    virtual std::string fetch_message(const message_handle& handle) = 0;

    /// Summarizes every message in `path` carrying both EMFS headers.
    virtual std::vector<std::pair<message_handle, message_summary>>
    list_messages(const mailbox_path& path) = 0;

    /// Relocates a message, preserving its wire text byte for byte.
    virtual message_handle move_message(const message_handle& handle, const mailbox_path& dest) = 0;

    /// Flags a message deleted and expunges it.
    virtual void delete_message(const message_handle& handle) = 0;
};

/**
Factory for authenticated sessions against one backend (real network or
the in-process mock).
**/
class transport {
public:
    virtual ~transport() = default;

    virtual std::unique_ptr<session> connect_and_login(const provider_profile& profile) = 0;
};

} // namespace emfs
