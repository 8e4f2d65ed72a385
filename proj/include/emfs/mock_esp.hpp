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
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "emfs/codec.hpp"
#include "emfs/errors.hpp"
#include "emfs/transport.hpp"

namespace emfs::mock {

/**
One degraded-mode directive. Directives are queued in order: only the head
of the queue is armed, and a directive is consumed when its condition
fires. corrupt_message and delete_message act on the store immediately
when they reach the head.
**/
struct fault_directive {
    enum class kind {
        drop_nth_send,   ///< silently drop the n-th submit after arming
        corrupt_message, ///< garble the body of one stored message
        delete_message,  ///< remove one stored message out of band
        refuse_tls,      ///< refuse the next TLS negotiation
        fail_after,      ///< let n operations pass, fail the next one
    };

    kind what;
    std::uint64_t n = 0;
    std::string folder; // wire name, corrupt/delete targets
    std::uint64_t uid = 0;

    static fault_directive drop_nth_send(std::uint64_t n)
    {
        return {kind::drop_nth_send, n, {}, 0};
    }
    static fault_directive corrupt_message(std::string folder, std::uint64_t uid)
    {
        return {kind::corrupt_message, 0, std::move(folder), uid};
    }
    static fault_directive delete_message(std::string folder, std::uint64_t uid)
    {
        return {kind::delete_message, 0, std::move(folder), uid};
    }
    static fault_directive refuse_tls() { return {kind::refuse_tls, 0, {}, 0}; }
    static fault_directive fail_after(std::uint64_t n) { return {kind::fail_after, n, {}, 0}; }
};

using fault_script = std::deque<fault_directive>;

/// Client-visible operation counters, kept as a test oracle surface.
struct esp_stats {
    std::uint64_t submits = 0;
    std::uint64_t submits_accepted = 0;
    std::uint64_t message_deletes = 0;
    std::uint64_t message_moves = 0;
    std::uint64_t message_fetches = 0;
    std::uint64_t folder_creates = 0;
    std::uint64_t folder_deletes = 0;
    std::vector<std::string> folder_delete_order; // wire names, oldest first
};

/**
In-process email service provider simulator holding a single account.

The SMTP side is `submit`, which enforces the configured size cap and
delivers to INBOX. The IMAP side is the folder and message verbs used by
the transport binding. Every verb is atomic; the store is safe for
concurrent sessions. Stored messages keep their exact submitted wire
text. INBOX always exists and cannot be deleted.
**/
class mock_esp {
public:
    mock_esp(std::string address, std::string password, std::uint64_t size_limit_s,
             bool tls_enabled = true) :
        address_(std::move(address)), password_(std::move(password)), size_limit_(size_limit_s),
        tls_enabled_(tls_enabled)
    {
        if (size_limit_ == 0)
            throw std::invalid_argument("mock_esp: size limit must be positive");
        root_.children.emplace("INBOX", folder_node{});
    }

    mock_esp(const mock_esp&) = delete;
    mock_esp& operator=(const mock_esp&) = delete;

    const std::string& address() const noexcept { return address_; }
    const std::string& password() const noexcept { return password_; }
    std::uint64_t size_limit() const noexcept { return size_limit_; }
    bool tls_enabled() const noexcept { return tls_enabled_; }

    bool check_login(std::string_view user, std::string_view pass) const
    {
        std::lock_guard lock(mu_);
        return user == address_ && pass == password_;
    }

    /**
    Simulates the TLS negotiation outcome of a connection attempt.
    Returns false when the account has TLS disabled or a refuse_tls
    directive is armed.
    **/
    bool negotiate_tls()
    {
        std::lock_guard lock(mu_);
        if (!script_.empty() && script_.front().what == fault_directive::kind::refuse_tls) {
            script_.pop_front();
            apply_immediate_directives();
            return false;
        }
        return tls_enabled_;
    }

    // SMTP side ------------------------------------------------------------

    /**
    Accepts one message for delivery to INBOX. Rejects with
    message_too_large when the body payload (line breaks excluded)
    exceeds the size limit or the header block exceeds the fixed
    overhead budget.
    **/
    void submit(std::string_view wire)
    {
        std::lock_guard lock(mu_);
        check_fail_after();
        stats_.submits++;

        auto [header_size, payload_size] = measure(wire);
        if (header_size > message_overhead_budget)
            throw message_too_large("header block of " + std::to_string(header_size) +
                                    " octets exceeds the " +
                                    std::to_string(message_overhead_budget) + " octet budget");
        if (payload_size > size_limit_)
            throw message_too_large("body payload of " + std::to_string(payload_size) +
                                    " octets exceeds limit " + std::to_string(size_limit_));

        if (!script_.empty() && script_.front().what == fault_directive::kind::drop_nth_send) {
            if (++drop_send_seen_ == script_.front().n) {
                script_.pop_front();
                drop_send_seen_ = 0;
                apply_immediate_directives();
                stats_.submits_accepted++; // accepted, then lost in delivery
                return;
            }
        }

        folder_node& inbox = *find_folder_unlocked({"INBOX"});
        inbox.messages.push_back({inbox.next_uid++, std::string(wire)});
        stats_.submits_accepted++;
    }

    // IMAP side ------------------------------------------------------------

    void create_folder(const mailbox_path& path)
    {
        std::lock_guard lock(mu_);
        check_fail_after();
        folder_node* parent = &root_;
        if (!path.is_toplevel()) {
            parent = find_folder_unlocked(parent_segments(path));
            if (parent == nullptr)
                throw no_parent("parent of " + path.wire_name() + " does not exist");
        }
        if (parent->children.contains(path.leaf()))
            throw already_exists("folder " + path.wire_name() + " already exists");
        parent->children.emplace(path.leaf(), folder_node{});
        stats_.folder_creates++;
    }

    void select_folder(const mailbox_path& path)
    {
        std::lock_guard lock(mu_);
        check_fail_after();
        require_folder_unlocked(path);
    }

    std::vector<mailbox_path> list_folders(const mailbox_path& path)
    {
        std::lock_guard lock(mu_);
        check_fail_after();
        const folder_node& node = *require_folder_unlocked(path);
        std::vector<mailbox_path> out;
        out.reserve(node.children.size());
        for (const auto& [name, child] : node.children)
            out.push_back(path.child(name));
        return out;
    }

    void delete_folder(const mailbox_path& path)
    {
        std::lock_guard lock(mu_);
        check_fail_after();
        if (path.wire_name() == "INBOX")
            throw transport_error("INBOX cannot be deleted");
        folder_node* node = find_folder_unlocked(path.segments());
        if (node == nullptr)
            throw no_such_folder("no folder " + path.wire_name());
        if (!node->children.empty())
            throw has_subfolders("folder " + path.wire_name() + " has subfolders");
        folder_node* parent =
            path.is_toplevel() ? &root_ : find_folder_unlocked(parent_segments(path));
        parent->children.erase(path.leaf());
        stats_.folder_deletes++;
        stats_.folder_delete_order.push_back(path.wire_name());
    }

    std::string fetch_message(const message_handle& handle)
    {
        std::lock_guard lock(mu_);
        check_fail_after();
        stats_.message_fetches++;
        return require_message_unlocked(handle)->wire;
    }

    std::vector<std::pair<message_handle, message_summary>> list_messages(const mailbox_path& path)
    {
        std::lock_guard lock(mu_);
        check_fail_after();
        const folder_node& node = *require_folder_unlocked(path);
        std::vector<std::pair<message_handle, message_summary>> out;
        for (const auto& stored : node.messages) {
            auto fields = emfs::detail::split_wire(stored.wire);
            if (!fields.has_filename || !fields.has_next)
                continue; // not EMFS traffic
            message_summary summary;
            summary.subject = fields.subject;
            summary.filename = fields.filename;
            summary.next_id = fields.next_id;
            summary.body_size = emfs::detail::payload_octets(fields.body);
            summary.raw_size = stored.wire.size();
            out.emplace_back(message_handle{path, stored.uid}, std::move(summary));
        }
        return out;
    }

    message_handle move_message(const message_handle& handle, const mailbox_path& dest)
    {
        std::lock_guard lock(mu_);
        check_fail_after();
        folder_node* dest_node = find_folder_unlocked(dest.segments());
        if (dest_node == nullptr)
            throw no_such_folder("no folder " + dest.wire_name());
        folder_node* src_node = require_folder_unlocked(handle.mailbox);
        auto it = std::find_if(src_node->messages.begin(), src_node->messages.end(),
                               [&](const stored_message& m) { return m.uid == handle.uid; });
        if (it == src_node->messages.end())
            throw no_such_message("no message " + std::to_string(handle.uid) + " in " +
                                  handle.mailbox.wire_name());
        std::string wire = std::move(it->wire);
        src_node->messages.erase(it);
        std::uint64_t uid = dest_node->next_uid++;
        dest_node->messages.push_back({uid, std::move(wire)});
        stats_.message_moves++;
        return message_handle{dest, uid};
    }

    void delete_message(const message_handle& handle)
    {
        std::lock_guard lock(mu_);
        check_fail_after();
        folder_node* node = require_folder_unlocked(handle.mailbox);
        auto it = std::find_if(node->messages.begin(), node->messages.end(),
                               [&](const stored_message& m) { return m.uid == handle.uid; });
        if (it == node->messages.end())
            throw no_such_message("no message " + std::to_string(handle.uid) + " in " +
                                  handle.mailbox.wire_name());
        node->messages.erase(it);
        stats_.message_deletes++;
    }

    // fault injection --------------------------------------------------------

    void set_fault_script(fault_script script)
    {
        std::lock_guard lock(mu_);
        script_ = std::move(script);
        drop_send_seen_ = 0;
        fail_after_seen_ = 0;
        apply_immediate_directives();
    }

    // inspection -------------------------------------------------------------

    esp_stats stats() const
    {
        std::lock_guard lock(mu_);
        return stats_;
    }

    bool folder_exists(const mailbox_path& path) const
    {
        std::lock_guard lock(mu_);
        return find_folder_unlocked(path.segments()) != nullptr;
    }

    std::uint64_t message_count(const mailbox_path& path) const
    {
        std::lock_guard lock(mu_);
        const folder_node* node = find_folder_unlocked(path.segments());
        if (node == nullptr)
            throw no_such_folder("no folder " + path.wire_name());
        return node->messages.size();
    }

    std::uint64_t inbox_count() const { return message_count(mailbox_path::inbox()); }

    /// All folder wire names in depth-first, name-sorted order.
    std::vector<std::string> folder_names() const
    {
        std::lock_guard lock(mu_);
        std::vector<std::string> out;
        collect_names(root_, "", out);
        return out;
    }

    // snapshot ---------------------------------------------------------------

    /**
    Deterministic line-oriented dump of the whole store: one "folder"
    line per folder in depth-first sorted order, each message as a
    size-prefixed "message" record holding its exact wire text.
    **/
    std::string snapshot() const
    {
        std::lock_guard lock(mu_);
        std::ostringstream out;
        out << "emfs-mock-snapshot 1\n";
        out << "address " << address_ << "\n";
        out << "password " << password_ << "\n";
        out << "limit " << size_limit_ << "\n";
        out << "tls " << (tls_enabled_ ? 1 : 0) << "\n";
        dump_folder(root_, "", out);
        out << "end\n";
        return out.str();
    }

    void save(const std::filesystem::path& file) const
    {
        std::ofstream out(file, std::ios::binary | std::ios::trunc);
        if (!out)
            throw bad_config("cannot write snapshot file " + file.string());
        out << snapshot();
    }

    static std::unique_ptr<mock_esp> load(const std::filesystem::path& file)
    {
        std::ifstream in(file, std::ios::binary);
        if (!in)
            throw bad_config("cannot read snapshot file " + file.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse_snapshot(buf.str(), file.string());
    }

    static std::unique_ptr<mock_esp> from_snapshot(std::string_view text)
    {
        return parse_snapshot(text, "<memory>");
    }

private:
    struct stored_message {
        std::uint64_t uid = 0;
        std::string wire;
    };

    struct folder_node {
        std::vector<stored_message> messages;
        std::map<std::string, folder_node> children;
        std::uint64_t next_uid = 1;
    };

    static std::vector<std::string> parent_segments(const mailbox_path& path)
    {
        const auto& segs = path.segments();
        return std::vector<std::string>(segs.begin(), segs.end() - 1);
    }

    folder_node* find_folder_unlocked(const std::vector<std::string>& segments)
    {
        folder_node* node = &root_;
        for (const auto& name : segments) {
            auto it = node->children.find(name);
            if (it == node->children.end())
                return nullptr;
            node = &it->second;
        }
        return node;
    }

    const folder_node* find_folder_unlocked(const std::vector<std::string>& segments) const
    {
        return const_cast<mock_esp*>(this)->find_folder_unlocked(segments);
    }

    folder_node* require_folder_unlocked(const mailbox_path& path)
    {
        folder_node* node = find_folder_unlocked(path.segments());
        if (node == nullptr)
            throw no_such_folder("no folder " + path.wire_name());
        return node;
    }

    stored_message* require_message_unlocked(const message_handle& handle)
    {
        folder_node* node = require_folder_unlocked(handle.mailbox);
        for (auto& m : node->messages)
            if (m.uid == handle.uid)
                return &m;
        throw no_such_message("no message " + std::to_string(handle.uid) + " in " +
                              handle.mailbox.wire_name());
    }

    /// (header block octets, body payload octets sans CR/LF)
    static std::pair<std::uint64_t, std::uint64_t> measure(std::string_view wire)
    {
        std::size_t sep = wire.find("\r\n\r\n");
        std::size_t body_start;
        if (sep != std::string_view::npos) {
            body_start = sep + 4;
        } else {
            sep = wire.find("\n\n");
            if (sep == std::string_view::npos)
                return {wire.size(), 0};
            body_start = sep + 2;
        }
        return {body_start, emfs::detail::payload_octets(wire.substr(body_start))};
    }

    void check_fail_after()
    {
        if (script_.empty() || script_.front().what != fault_directive::kind::fail_after)
            return;
        if (fail_after_seen_ < script_.front().n) {
            fail_after_seen_++;
            return;
        }
        script_.pop_front();
        fail_after_seen_ = 0;
        apply_immediate_directives();
        throw fault_injected("scripted failure");
    }

    /// corrupt/delete directives act on the store the moment they are armed.
    void apply_immediate_directives()
    {
        while (!script_.empty()) {
            const fault_directive& d = script_.front();
            if (d.what == fault_directive::kind::corrupt_message) {
                tamper_body(d.folder, d.uid);
                script_.pop_front();
            } else if (d.what == fault_directive::kind::delete_message) {
                remove_out_of_band(d.folder, d.uid);
                script_.pop_front();
            } else {
                break;
            }
        }
    }

    static std::vector<std::string> split_wire_name(std::string_view name)
    {
        std::vector<std::string> segs;
        std::size_t pos = 0;
        while (true) {
            std::size_t slash = name.find('/', pos);
            if (slash == std::string_view::npos) {
                segs.emplace_back(name.substr(pos));
                return segs;
            }
            segs.emplace_back(name.substr(pos, slash - pos));
            pos = slash + 1;
        }
    }

    void tamper_body(std::string_view folder, std::uint64_t uid)
    {
        folder_node* node = find_folder_unlocked(split_wire_name(folder));
        if (node == nullptr)
            return; // tampering with a missing folder is a no-op
        for (auto& m : node->messages) {
            if (m.uid != uid)
                continue;
            std::size_t sep = m.wire.find("\r\n\r\n");
            if (sep == std::string::npos) {
                m.wire += "\r\n\r\n****";
                return;
            }
            std::size_t body_start = sep + 4;
            // '*' is outside the transfer alphabet, so readers notice
            std::size_t changed = 0;
            for (std::size_t i = body_start; i < m.wire.size() && changed < 4; i++) {
                if (m.wire[i] != '\r' && m.wire[i] != '\n') {
                    m.wire[i] = '*';
                    changed++;
                }
            }
            if (changed == 0)
                m.wire += "****";
            return;
        }
    }

    void remove_out_of_band(std::string_view folder, std::uint64_t uid)
    {
        folder_node* node = find_folder_unlocked(split_wire_name(folder));
        if (node == nullptr)
            return;
        std::erase_if(node->messages, [&](const stored_message& m) { return m.uid == uid; });
    }

    void collect_names(const folder_node& node, const std::string& prefix,
                       std::vector<std::string>& out) const
    {
        for (const auto& [name, child] : node.children) {
            std::string full = prefix.empty() ? name : prefix + "/" + name;
            out.push_back(full);
            collect_names(child, full, out);
        }
    }

    void dump_folder(const folder_node& node, const std::string& prefix, std::ostringstream& out) const
    {
        for (const auto& [name, child] : node.children) {
            std::string full = prefix.empty() ? name : prefix + "/" + name;
            out << "folder " << full << "\n";
            for (const auto& m : child.messages)
                out << "message " << m.uid << " " << m.wire.size() << "\n" << m.wire << "\n";
            dump_folder(child, full, out);
        }
    }

    static std::unique_ptr<mock_esp> parse_snapshot(std::string_view text, const std::string& origin)
    {
        auto fail = [&](const std::string& why) -> std::unique_ptr<mock_esp> {
            throw bad_config("snapshot " + origin + ": " + why);
        };

        std::size_t pos = 0;
        auto next_line = [&]() -> std::optional<std::string_view> {
            if (pos >= text.size())
                return std::nullopt;
            std::size_t eol = text.find('\n', pos);
            std::string_view line = eol == std::string_view::npos ?
                                        text.substr(pos) :
                                        text.substr(pos, eol - pos);
            pos = eol == std::string_view::npos ? text.size() : eol + 1;
            return line;
        };

        auto header = next_line();
        if (!header || *header != "emfs-mock-snapshot 1")
            return fail("missing or unsupported snapshot header");

        std::string address, password;
        std::uint64_t limit = 0;
        bool tls = true;
        for (int i = 0; i < 4; i++) {
            auto line = next_line();
            if (!line)
                return fail("truncated preamble");
            std::size_t space = line->find(' ');
            std::string_view key = line->substr(0, space);
            std::string_view value = space == std::string_view::npos ? "" : line->substr(space + 1);
            if (key == "address")
                address = value;
            else if (key == "password")
                password = value;
            else if (key == "limit")
                limit = std::strtoull(std::string(value).c_str(), nullptr, 10);
            else if (key == "tls")
                tls = value == "1";
            else
                return fail("unexpected preamble key");
        }
        if (limit == 0)
            return fail("size limit must be positive");

        auto esp = std::make_unique<mock_esp>(address, password, limit, tls);
        folder_node* current = nullptr;
        while (true) {
            auto line = next_line();
            if (!line)
                return fail("missing end marker");
            if (*line == "end")
                break;
            if (line->starts_with("folder ")) {
                auto segs = split_wire_name(line->substr(7));
                folder_node* node = &esp->root_;
                for (const auto& s : segs)
                    node = &node->children[s]; // creates along the way
                current = node;
            } else if (line->starts_with("message ")) {
                if (current == nullptr)
                    return fail("message record before any folder");
                std::istringstream fields{std::string(line->substr(8))};
                std::uint64_t uid = 0, size = 0;
                fields >> uid >> size;
                if (fields.fail() || pos + size > text.size())
                    return fail("bad message record");
                current->messages.push_back({uid, std::string(text.substr(pos, size))});
                pos += size;
                if (pos < text.size() && text[pos] == '\n')
                    pos++;
                if (uid >= current->next_uid)
                    current->next_uid = uid + 1;
            } else {
                return fail("unrecognized record");
            }
        }
        if (esp->root_.children.find("INBOX") == esp->root_.children.end())
            esp->root_.children.emplace("INBOX", folder_node{});
        return esp;
    }

    std::string address_;
    std::string password_;
    std::uint64_t size_limit_;
    bool tls_enabled_;
    folder_node root_;
    fault_script script_;
    std::uint64_t drop_send_seen_ = 0;
    std::uint64_t fail_after_seen_ = 0;
    esp_stats stats_;
    mutable std::mutex mu_;
};

/**
Session binding that speaks to a mock_esp directly, no sockets involved.
**/
class mock_session : public session {
public:
    explicit mock_session(mock_esp& esp) : esp_(esp) {}

    void create_folder(const mailbox_path& path) override { esp_.create_folder(path); }
    void select_folder(const mailbox_path& path) override { esp_.select_folder(path); }
    std::vector<mailbox_path> list_folders(const mailbox_path& path) override
    {
        return esp_.list_folders(path);
    }
    void delete_folder(const mailbox_path& path) override { esp_.delete_folder(path); }
    void send_message(const emfs_message& message) override { esp_.submit(serialize(message)); }
    std::string fetch_message(const message_handle& handle) override
    {
        return esp_.fetch_message(handle);
    }
    std::vector<std::pair<message_handle, message_summary>>
    list_messages(const mailbox_path& path) override
    {
        return esp_.list_messages(path);
    }
    message_handle move_message(const message_handle& handle, const mailbox_path& dest) override
    {
        return esp_.move_message(handle, dest);
    }
    void delete_message(const message_handle& handle) override { esp_.delete_message(handle); }

private:
    mock_esp& esp_;
};

/**
Transport bound to one mock_esp. The password is resolved from the
profile's credential_ref environment variable unless an override is
supplied (the CLI's mock mode passes the snapshot's own password).
**/
class mock_transport : public transport {
public:
    explicit mock_transport(mock_esp& esp, std::optional<std::string> password_override = {}) :
        esp_(esp), password_override_(std::move(password_override))
    {
    }

    std::unique_ptr<session> connect_and_login(const provider_profile& profile) override
    {
        if (profile.use_tls && !esp_.negotiate_tls())
            throw tls_unavailable("server refused STARTTLS");
        std::string password =
            password_override_ ? *password_override_ : resolve_credential(profile);
        if (!esp_.check_login(profile.username, password))
            throw auth_failed("LOGIN rejected for " + profile.username);
        return std::make_unique<mock_session>(esp_);
    }

private:
    mock_esp& esp_;
    std::optional<std::string> password_override_;
};

} // namespace emfs::mock
