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

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "emfs/codec.hpp"
#include "emfs/errors.hpp"
#include "emfs/transport.hpp"

namespace emfs {

/**
One file as seen by the index: the chain's first id, its length N >= 1,
and the total encoded size across all slices.
**/
struct file_entry {
    std::string filename;
    id_hash first_id;
    std::uint64_t chain_length = 1;
    std::uint64_t encoded_size = 0;

    bool operator==(const file_entry&) const = default;
};

/// What list_dir returns: files in the directory plus child directory names.
struct dir_listing {
    std::vector<file_entry> files;
    std::vector<std::string> subdirs;
};

/**
Session-lifetime cache of the folder hierarchy: every known directory maps
to its file entries (sorted by filename). Built from a full traversal at
session start and updated incrementally by every mutating operation, so
that lookups and listings cost no network traffic.
**/
class fs_index {
public:
    using entry_map = std::map<mailbox_path, std::vector<file_entry>>;

    fs_index() : built_at_(std::chrono::system_clock::now()) {}

    bool has_dir(const mailbox_path& path) const { return entries_.count(path) > 0; }

    const std::vector<file_entry>& entries(const mailbox_path& path) const
    {
        auto it = entries_.find(path);
        if (it == entries_.end())
            throw no_such_folder("no directory " + path.wire_name() + " in index");
        return it->second;
    }

    const file_entry* find_entry(const mailbox_path& path, std::string_view filename) const
    {
        auto it = entries_.find(path);
        if (it == entries_.end())
            return nullptr;
        for (const auto& e : it->second)
            if (e.filename == filename)
                return &e;
        return nullptr;
    }

    std::vector<std::string> subdir_names(const mailbox_path& path) const
    {
        std::vector<std::string> out;
        for (const auto& [dir, entries] : entries_)
            if (dir.depth() == path.depth() + 1 && path.contains(dir))
                out.push_back(dir.leaf());
        return out;
    }

    /// Per-directory message total: the sum of chain lengths of its files.
    std::uint64_t message_count(const mailbox_path& path) const
    {
        std::uint64_t m = 0;
        for (const auto& e : entries(path))
            m += e.chain_length;
        return m;
    }

    std::vector<mailbox_path> directories() const
    {
        std::vector<mailbox_path> out;
        out.reserve(entries_.size());
        for (const auto& [dir, entries] : entries_)
            out.push_back(dir);
        return out;
    }

    bool empty() const { return entries_.empty(); }

    void add_dir(const mailbox_path& path) { entries_.try_emplace(path); }

    void remove_subtree(const mailbox_path& path)
    {
        std::erase_if(entries_, [&](const auto& kv) { return path.contains(kv.first); });
    }

    void add_entry(const mailbox_path& path, file_entry entry)
    {
        auto& list = entries_[path];
        auto pos = std::lower_bound(list.begin(), list.end(), entry.filename,
                                    [](const file_entry& e, const std::string& name) {
                                        return e.filename < name;
                                    });
        list.insert(pos, std::move(entry));
    }

    void remove_entry(const mailbox_path& path, std::string_view filename)
    {
        auto it = entries_.find(path);
        if (it == entries_.end())
            return;
        std::erase_if(it->second, [&](const file_entry& e) { return e.filename == filename; });
    }

    std::chrono::system_clock::time_point built_at() const { return built_at_; }

    const std::vector<std::string>& warnings() const { return warnings_; }
    void add_warning(std::string w) { warnings_.push_back(std::move(w)); }

    /// Structural equality; the build timestamp and warnings do not count.
    bool operator==(const fs_index& other) const { return entries_ == other.entries_; }

private:
    entry_map entries_;
    std::chrono::system_clock::time_point built_at_;
    std::vector<std::string> warnings_;
};

/**
The filesystem engine. One instance owns one authenticated session and a
cached index; mutations are single-threaded while concurrent read-only
index queries are fine. Directory paths are user-facing strings with '/'
separators, resolved under the profile's root folder.
**/
class fs_instance {
public:
    fs_instance(fs_instance&&) = default;
    fs_instance& operator=(fs_instance&&) = default;

    /**
    Creates (or opens) the instance on the account: logs in, creates the
    root folder when absent, and builds the index. Safe to run on an
    account that already hosts an instance.
    **/
    static fs_instance init(transport& backend, const provider_profile& profile)
    {
        auto live = backend.connect_and_login(profile);
        mailbox_path root = mailbox_path::root(profile.root_folder);
        try {
            live->create_folder(root);
        } catch (const already_exists&) {
            // instance already present; init is idempotent
        } catch (const emfs::error& e) {
            throw root_create_failed("cannot create root folder " + profile.root_folder + ": " +
                                     e.what());
        }
        return fs_instance(std::move(live), profile);
    }

    /**
    Opens an existing instance without creating anything; the root folder
    must already exist.
    **/
    static fs_instance open(transport& backend, const provider_profile& profile)
    {
        auto live = backend.connect_and_login(profile);
        live->select_folder(mailbox_path::root(profile.root_folder));
        return fs_instance(std::move(live), profile);
    }

    const provider_profile& profile() const noexcept { return profile_; }
    const fs_index& index() const noexcept { return index_; }
    session& raw_session() noexcept { return *session_; }

    /**
    Creates a directory and any missing ancestors, root-to-leaf, like
    mkdir -p. Existing prefixes are left untouched; repeating the call is
    a no-op.
    **/
    void mkdir(std::string_view user_path)
    {
        require_root();
        mailbox_path target = resolve(user_path);
        for (std::size_t depth = 2; depth <= target.depth(); depth++) {
            mailbox_path prefix(std::vector<std::string>(target.segments().begin(),
                                                         target.segments().begin() + depth));
            if (!index_.has_dir(prefix)) {
                try {
                    session_->create_folder(prefix);
                } catch (const already_exists&) {
                    // present on the server but not in the index; adopt it
                }
                index_.add_dir(prefix);
            }
            session_->select_folder(prefix);
        }
    }

    /**
    Removes a directory tree recursively, messages included, deleting
    children strictly before parents. Removing the root path empties the
    instance; init is required before further use.
    **/
    void rmdir(std::string_view user_path)
    {
        require_root();
        mailbox_path target = resolve(user_path);
        if (!index_.has_dir(target))
            throw no_such_folder("no directory " + display_path(user_path));
        std::vector<mailbox_path> doomed;
        for (const auto& dir : index_.directories())
            if (target.contains(dir))
                doomed.push_back(dir);
        // deepest first so every folder is childless when its turn comes
        std::sort(doomed.begin(), doomed.end(), [](const mailbox_path& a, const mailbox_path& b) {
            if (a.depth() != b.depth())
                return a.depth() > b.depth();
            return a < b;
        });
        for (const auto& dir : doomed) {
            session_->delete_folder(dir);
            index_.remove_subtree(dir);
        }
    }

    /**
    Stores a file: encode, slice at the provider limit S, pack into a
    chain, send each message over the submission path, then relocate the
    delivered messages from the inbox into the destination folder.
    Returns the new index entry.
    **/
    file_entry put(std::string_view data, std::string_view dest_dir, std::string_view filename,
                   bool overwrite = false)
    {
        require_root();
        mailbox_path dest = resolve(dest_dir);
        if (!index_.has_dir(dest))
            throw no_such_folder("no directory " + display_path(dest_dir));
        validate_filename(filename);
        if (index_.find_entry(dest, filename) != nullptr) {
            if (!overwrite)
                throw file_exists(std::string(filename) + " already exists in " +
                                  display_path(dest_dir));
            remove(dest_dir, filename);
        }

        encoded_text encoded = encode8(data);
        slice_list slices = slice_encoded(encoded, profile_.size_limit_s);
        std::vector<emfs_message> messages = pack(filename, slices, profile_.username);
        const std::string& first_id = messages[0].first_id;

        for (std::size_t i = 0; i < messages.size(); i++) {
            try {
                session_->send_message(messages[i]);
            } catch (const emfs::error& e) {
                if (i == 0)
                    throw; // nothing sent yet, no partial state
                discard_inbox_chain(filename, first_id);
                throw partial_upload("send " + std::to_string(i + 1) + " of " +
                                         std::to_string(messages.size()) + " failed for " +
                                         std::string(filename) + ": " + e.what(),
                                     i, messages.size());
            }
        }

        // relocation: self-addressed storage traffic lands in INBOX first
        std::vector<message_handle> delivered = inbox_chain_handles(filename, first_id);
        if (delivered.size() != messages.size()) {
            std::uint64_t found = delivered.size();
            discard_handles(delivered);
            throw partial_upload("only " + std::to_string(found) + " of " +
                                     std::to_string(messages.size()) +
                                     " messages were delivered for " + std::string(filename),
                                 found, messages.size());
        }
        std::size_t moved = 0;
        try {
            for (const auto& handle : delivered) {
                session_->move_message(handle, dest);
                moved++;
            }
        } catch (const emfs::error&) {
            discard_chain_best_effort(dest, filename, first_id);
            discard_handles(std::vector<message_handle>(delivered.begin() + moved, delivered.end()));
            throw partial_upload("relocation failed after " + std::to_string(moved) + " of " +
                                     std::to_string(delivered.size()) + " moves for " +
                                     std::string(filename),
                                 moved, delivered.size());
        }

        file_entry entry{std::string(filename), id_hash{first_id},
                         static_cast<std::uint64_t>(messages.size()), encoded.size()};
        index_.add_entry(dest, entry);
        return entry;
    }

    /**
    Reconstructs a file: finds the first message by its subject token,
    follows next links to the "-1" sentinel, joins the slices in order
    and decodes once.
    **/
    std::string get(std::string_view dir, std::string_view filename)
    {
        require_root();
        mailbox_path path = resolve(dir);
        const file_entry* entry = index_.find_entry(path, filename);
        if (entry == nullptr)
            throw no_such_file(std::string(filename) + " not found in " + display_path(dir));

        std::vector<chain_link> chain = walk_chain(path, *entry);
        std::string joined;
        std::uint64_t total = 0;
        for (const auto& link : chain)
            total += link.message.body.size();
        joined.reserve(total);
        for (const auto& link : chain)
            joined += link.message.body.payload;
        return decode8(joined);
    }

    /**
    Deletes a file by walking its chain, removing each message in turn
    until the end-of-chain sentinel. On a broken link the already-walked
    prefix stays deleted, the index is rebuilt, and broken_chain reports
    how much of the tail remains for manual cleanup.
    **/
    void remove(std::string_view dir, std::string_view filename)
    {
        require_root();
        mailbox_path path = resolve(dir);
        const file_entry* entry = index_.find_entry(path, filename);
        if (entry == nullptr)
            throw no_such_file(std::string(filename) + " not found in " + display_path(dir));
        file_entry target = *entry;

        std::vector<chain_link> chain;
        try {
            chain = walk_chain(path, target);
        } catch (const broken_chain&) {
            index_ = build_index();
            throw;
        }
        for (const auto& link : chain) {
            std::string next = link.message.next_id;
            session_->delete_message(link.handle);
            if (next == chain_end)
                break;
        }
        index_.remove_entry(path, target.filename);
    }

    /**
    Full index rebuild: lists the folder tree, summarizes every folder's
    messages and groups them into chains by their subject token.
    Malformed or conflicting messages are skipped and reported as
    warnings on the returned index.
    **/
    fs_index build_index()
    {
        mailbox_path root = mailbox_path::root(profile_.root_folder);
        session_->select_folder(root); // no_such_folder when the instance is gone
        fs_index fresh;
        std::vector<mailbox_path> queue{root};
        while (!queue.empty()) {
            mailbox_path dir = queue.back();
            queue.pop_back();
            fresh.add_dir(dir);
            index_folder(dir, fresh);
            for (auto& child : session_->list_folders(dir))
                queue.push_back(std::move(child));
        }
        return fresh;
    }

    /// Replaces the cached index with a freshly built one.
    void refresh_index() { index_ = build_index(); }

    /**
    Pure index read: files and child directories of one path. No network
    traffic is generated.
    **/
    dir_listing list_dir(std::string_view user_path) const
    {
        mailbox_path path = resolve(user_path);
        dir_listing out;
        out.files = index_.entries(path); // throws no_such_folder when absent
        out.subdirs = index_.subdir_names(path);
        std::sort(out.subdirs.begin(), out.subdirs.end());
        return out;
    }

private:
    fs_instance(std::unique_ptr<session> live, provider_profile profile) :
        profile_(std::move(profile)), session_(std::move(live))
    {
        index_ = build_index();
    }

    struct chain_link {
        message_handle handle;
        emfs_message message;
    };

    mailbox_path resolve(std::string_view user_path) const
    {
        return mailbox_path::from_user_path(profile_.root_folder, user_path);
    }

    std::string display_path(std::string_view user_path) const
    {
        return resolve(user_path).display();
    }

    void require_root() const
    {
        if (!index_.has_dir(mailbox_path::root(profile_.root_folder)))
            throw no_such_folder("root folder " + profile_.root_folder +
                                 " is gone; run init again");
    }

    static void validate_filename(std::string_view filename)
    {
        if (filename.empty())
            throw invalid_name("filename must not be empty");
        for (char c : filename)
            if (c == '/' || c == '\r' || c == '\n' || c == '\0')
                throw invalid_name("filename contains a forbidden character");
    }

    /**
    Resolves the members of one chain inside `path` in chain order.
    Candidates are the folder's messages whose subject token and filename
    match the entry; each position is matched by recomputing the id-hash
    of the candidate body. Throws broken_chain when a link resolves to no
    message.
    **/
    std::vector<chain_link> walk_chain(const mailbox_path& path, const file_entry& entry)
    {
        struct candidate {
            message_handle handle;
            emfs_message message;
            bool used = false;
        };
        std::vector<candidate> candidates;
        for (auto& [handle, summary] : session_->list_messages(path)) {
            if (summary.filename != entry.filename)
                continue;
            if (first_token(summary.subject) != entry.first_id.value)
                continue;
            std::string wire = session_->fetch_message(handle);
            try {
                candidates.push_back({handle, parse_message(wire), false});
            } catch (const emfs::error&) {
                // unparseable member: invisible here, surfaces as a broken link
            }
        }

        std::vector<chain_link> chain;
        std::string expected = entry.first_id.value;
        for (std::uint64_t position = 0;; position++) {
            candidate* hit = nullptr;
            for (auto& c : candidates) {
                if (c.used)
                    continue;
                if (hash_id(entry.filename, position, c.message.body).value == expected) {
                    hit = &c;
                    break;
                }
            }
            if (hit == nullptr) {
                std::uint64_t remaining =
                    entry.chain_length > position ? entry.chain_length - position : 1;
                throw broken_chain("chain of " + entry.filename + " breaks at message " +
                                       std::to_string(position) + ": no message with id " +
                                       expected + " (" + std::to_string(remaining) +
                                       " message(s) unaccounted for)",
                                   position, remaining);
            }
            hit->used = true;
            chain.push_back({hit->handle, hit->message});
            if (hit->message.last_in_chain())
                break;
            expected = hit->message.next_id;
        }
        return chain;
    }

    static std::string first_token(std::string_view subject)
    {
        std::size_t space = subject.find(' ');
        return std::string(space == std::string_view::npos ? subject : subject.substr(0, space));
    }

    std::vector<message_handle> inbox_chain_handles(std::string_view filename,
                                                    std::string_view first_id)
    {
        std::vector<message_handle> out;
        for (auto& [handle, summary] : session_->list_messages(mailbox_path::inbox()))
            if (summary.filename == filename && first_token(summary.subject) == first_id)
                out.push_back(handle);
        return out;
    }

    void discard_inbox_chain(std::string_view filename, std::string_view first_id)
    {
        discard_handles(inbox_chain_handles(filename, first_id));
    }

    void discard_handles(const std::vector<message_handle>& handles)
    {
        for (const auto& h : handles) {
            try {
                session_->delete_message(h);
            } catch (const emfs::error&) {
                // best effort; the account may hold strays after a fault
            }
        }
    }

    void discard_chain_best_effort(const mailbox_path& path, std::string_view filename,
                                   std::string_view first_id)
    {
        try {
            for (auto& [handle, summary] : session_->list_messages(path))
                if (summary.filename == filename && first_token(summary.subject) == first_id)
                    session_->delete_message(handle);
        } catch (const emfs::error&) {
        }
    }

    void index_folder(const mailbox_path& dir, fs_index& into)
    {
        struct group {
            std::string filename;
            std::uint64_t count = 0;
            std::uint64_t size = 0;
        };
        std::vector<std::string> order;
        std::unordered_map<std::string, group> groups;      // token -> chain
        std::unordered_map<std::string, std::string> owner; // filename -> token

        for (auto& [handle, summary] : session_->list_messages(dir)) {
            std::string token = first_token(summary.subject);
            if (!is_id_hash(token)) {
                into.add_warning("skipping message " + std::to_string(handle.uid) + " in " +
                                 dir.wire_name() + ": subject lacks an id-hash token");
                continue;
            }
            std::string rest = summary.subject.size() > token.size() ?
                                   summary.subject.substr(token.size() + 1) :
                                   std::string{};
            if (rest != summary.filename) {
                into.add_warning("skipping message " + std::to_string(handle.uid) + " in " +
                                 dir.wire_name() + ": subject filename mismatch");
                continue;
            }
            auto it = groups.find(token);
            if (it == groups.end()) {
                auto claimed = owner.find(summary.filename);
                if (claimed != owner.end() && claimed->second != token) {
                    into.add_warning("skipping chain " + token + " in " + dir.wire_name() +
                                     ": filename " + summary.filename + " already indexed");
                    continue;
                }
                owner[summary.filename] = token;
                order.push_back(token);
                it = groups.emplace(token, group{summary.filename, 0, 0}).first;
            } else if (it->second.filename != summary.filename) {
                into.add_warning("skipping message " + std::to_string(handle.uid) + " in " +
                                 dir.wire_name() + ": filename disagrees within chain " + token);
                continue;
            }
            it->second.count++;
            it->second.size += summary.body_size;
        }

        for (const auto& token : order) {
            const group& g = groups.at(token);
            into.add_entry(dir, file_entry{g.filename, id_hash{token}, g.count, g.size});
        }
    }

    provider_profile profile_;
    std::unique_ptr<session> session_;
    fs_index index_;
};

} // namespace emfs
