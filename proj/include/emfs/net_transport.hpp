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
#include <cstring>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <netdb.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <openssl/err.h>
#include <openssl/ssl.h>

#include "emfs/base64.hpp"
#include "emfs/codec.hpp"
#include "emfs/errors.hpp"
#include "emfs/transport.hpp"

namespace emfs::net {

/**
Blocking TCP stream with optional in-place TLS upgrade (the STARTTLS
pattern on both SMTP and IMAP). Line reads strip the CRLF terminator.
**/
class tcp_stream {
public:
    tcp_stream(const std::string& host, std::uint16_t port, int timeout_seconds = 30)
    {
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* result = nullptr;
        int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &result);
        if (rc != 0)
            throw connect_failed("cannot resolve " + host + ": " + gai_strerror(rc));
        for (addrinfo* ai = result; ai != nullptr; ai = ai->ai_next) {
            fd_ = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
            if (fd_ < 0)
                continue;
            if (::connect(fd_, ai->ai_addr, ai->ai_addrlen) == 0)
                break;
            ::close(fd_);
            fd_ = -1;
        }
        ::freeaddrinfo(result);
        if (fd_ < 0)
            throw connect_failed("cannot connect to " + host + ":" + std::to_string(port));
        timeval tv{timeout_seconds, 0};
        ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
        ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
    }

    tcp_stream(const tcp_stream&) = delete;
    tcp_stream& operator=(const tcp_stream&) = delete;

    ~tcp_stream()
    {
        if (ssl_ != nullptr) {
            SSL_shutdown(ssl_);
            SSL_free(ssl_);
        }
        if (ctx_ != nullptr)
            SSL_CTX_free(ctx_);
        if (fd_ >= 0)
            ::close(fd_);
    }

    /// Runs the TLS client handshake over the established connection.
    void upgrade_tls(const std::string& host, bool verify_peer = true)
    {
        ctx_ = SSL_CTX_new(TLS_client_method());
        if (ctx_ == nullptr)
            throw tls_unavailable("cannot allocate TLS context");
        if (verify_peer) {
            SSL_CTX_set_default_verify_paths(ctx_);
            SSL_CTX_set_verify(ctx_, SSL_VERIFY_PEER, nullptr);
        }
        ssl_ = SSL_new(ctx_);
        if (ssl_ == nullptr)
            throw tls_unavailable("cannot allocate TLS session");
        SSL_set_tlsext_host_name(ssl_, host.c_str());
        SSL_set1_host(ssl_, host.c_str());
        SSL_set_fd(ssl_, fd_);
        if (SSL_connect(ssl_) != 1) {
            unsigned long err = ERR_get_error();
            char buf[256];
            ERR_error_string_n(err, buf, sizeof(buf));
            throw tls_unavailable(std::string("TLS handshake with ") + host + " failed: " + buf);
        }
    }

    bool tls_active() const noexcept { return ssl_ != nullptr; }

    void write_all(std::string_view data)
    {
        while (!data.empty()) {
            ssize_t n;
            if (ssl_ != nullptr)
                n = SSL_write(ssl_, data.data(), static_cast<int>(data.size()));
            else
                n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
            if (n <= 0)
                throw transport_error("connection write failed");
            data.remove_prefix(static_cast<std::size_t>(n));
        }
    }

    /// Reads one CRLF-terminated line; the terminator is stripped.
    std::string read_line()
    {
        std::string line;
        while (true) {
            std::size_t nl = buffer_.find('\n');
            if (nl != std::string::npos) {
                line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                if (!line.empty() && line.back() == '\r')
                    line.pop_back();
                return line;
            }
            fill();
        }
    }

    std::string read_exact(std::size_t n)
    {
        while (buffer_.size() < n)
            fill();
        std::string out = buffer_.substr(0, n);
        buffer_.erase(0, n);
        return out;
    }

private:
    void fill()
    {
        char chunk[4096];
        ssize_t n;
        if (ssl_ != nullptr)
            n = SSL_read(ssl_, chunk, sizeof(chunk));
        else
            n = ::recv(fd_, chunk, sizeof(chunk), 0);
        if (n <= 0)
            throw transport_error("connection closed while reading");
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }

    int fd_ = -1;
    SSL_CTX* ctx_ = nullptr;
    SSL* ssl_ = nullptr;
    std::string buffer_;
};

/**
Minimal SMTP submission client: EHLO, STARTTLS, AUTH, and dot-stuffed
DATA transfers.
**/
class smtp_client {
public:
    smtp_client(const std::string& host, std::uint16_t port, bool use_tls,
                const std::string& username, const std::string& password,
                bool verify_peer = true) :
        stream_(host, port)
    {
        expect(read_reply(), 220, "greeting");
        ehlo();
        if (use_tls) {
            stream_.write_all("STARTTLS\r\n");
            reply r = read_reply();
            if (r.code != 220)
                throw tls_unavailable("SMTP server refused STARTTLS: " + r.text);
            stream_.upgrade_tls(host, verify_peer);
            ehlo(); // capabilities must be re-read on the secured channel
        }
        authenticate(username, password);
    }

    ~smtp_client()
    {
        try {
            stream_.write_all("QUIT\r\n");
        } catch (...) {
        }
    }

    /// Submits one already-serialized message.
    void send(std::string_view from, std::string_view to, std::string_view wire)
    {
        stream_.write_all("MAIL FROM:<" + std::string(from) + ">\r\n");
        expect(read_reply(), 250, "MAIL FROM");
        stream_.write_all("RCPT TO:<" + std::string(to) + ">\r\n");
        expect(read_reply(), 250, "RCPT TO");
        stream_.write_all("DATA\r\n");
        expect(read_reply(), 354, "DATA");
        stream_.write_all(dot_stuff(wire));
        stream_.write_all(".\r\n");
        reply r = read_reply();
        if (r.code == 250)
            return;
        if (r.code == 552 || r.text.find("size") != std::string::npos ||
            r.text.find("too large") != std::string::npos)
            throw message_too_large("server rejected message: " + r.text);
        throw transport_error("server rejected message: " + r.text);
    }

private:
    struct reply {
        int code = 0;
        std::string text;
    };

    reply read_reply()
    {
        reply r;
        while (true) {
            std::string line = stream_.read_line();
            if (line.size() < 3)
                throw transport_error("malformed SMTP reply: \"" + line + "\"");
            r.code = std::atoi(line.substr(0, 3).c_str());
            if (!r.text.empty())
                r.text += " ";
            r.text += line.size() > 4 ? line.substr(4) : "";
            if (line.size() < 4 || line[3] != '-')
                return r;
        }
    }

    static void expect(const reply& r, int code, const char* step)
    {
        if (r.code != code)
            throw transport_error(std::string("SMTP ") + step + " failed: " +
                                  std::to_string(r.code) + " " + r.text);
    }

    void ehlo()
    {
        stream_.write_all("EHLO emfs.client\r\n");
        reply r = read_reply();
        if (r.code == 250)
            return;
        stream_.write_all("HELO emfs.client\r\n");
        expect(read_reply(), 250, "HELO");
    }

    void authenticate(const std::string& username, const std::string& password)
    {
        std::string token;
        token.push_back('\0');
        token += username;
        token.push_back('\0');
        token += password;
        stream_.write_all("AUTH PLAIN " + base64::encode(token) + "\r\n");
        reply r = read_reply();
        if (r.code == 235)
            return;
        if (r.code == 502 || r.code == 504) {
            // PLAIN not offered; fall back to the two-step LOGIN exchange
            stream_.write_all("AUTH LOGIN\r\n");
            expect(read_reply(), 334, "AUTH LOGIN");
            stream_.write_all(base64::encode(username) + "\r\n");
            expect(read_reply(), 334, "AUTH LOGIN username");
            stream_.write_all(base64::encode(password) + "\r\n");
            r = read_reply();
            if (r.code == 235)
                return;
        }
        throw auth_failed("SMTP authentication failed: " + std::to_string(r.code) + " " + r.text);
    }

    static std::string dot_stuff(std::string_view wire)
    {
        std::string out;
        out.reserve(wire.size() + 16);
        bool at_line_start = true;
        for (char c : wire) {
            if (at_line_start && c == '.')
                out.push_back('.');
            out.push_back(c);
            at_line_start = c == '\n';
        }
        if (!out.ends_with("\r\n"))
            out += "\r\n";
        return out;
    }

    tcp_stream stream_;
};

/**
Minimal IMAP4rev1 client covering the verbs EMFS needs: LOGIN, CREATE,
SELECT, LIST, DELETE, UID SEARCH/FETCH/STORE/EXPUNGE and MOVE with a
COPY fallback. Folder names are exchanged with the server-advertised
hierarchy delimiter.
**/
class imap_client {
public:
    imap_client(const std::string& host, std::uint16_t port, bool use_tls,
                const std::string& username, const std::string& password,
                bool verify_peer = true) :
        stream_(host, port)
    {
        std::string greeting = stream_.read_line();
        if (greeting.rfind("* OK", 0) != 0 && greeting.rfind("* PREAUTH", 0) != 0)
            throw connect_failed("unexpected IMAP greeting: " + greeting);
        if (use_tls) {
            response r = command("STARTTLS");
            if (!r.ok)
                throw tls_unavailable("IMAP server refused STARTTLS: " + r.status_line);
            stream_.upgrade_tls(host, verify_peer);
        }
        response r = command("LOGIN " + quote(username) + " " + quote(password));
        if (!r.ok)
            throw auth_failed("IMAP LOGIN rejected: " + r.status_line);
        detect_delimiter();
    }

    ~imap_client()
    {
        try {
            command("LOGOUT");
        } catch (...) {
        }
    }

    char delimiter() const noexcept { return delimiter_; }

    /// Translates a canonical "a/b/c" name to the server's delimiter.
    std::string to_server(std::string_view canonical) const
    {
        std::string out(canonical);
        if (delimiter_ != '/')
            for (char& c : out)
                if (c == '/')
                    c = delimiter_;
        return out;
    }

    void create(const std::string& name)
    {
        response r = command("CREATE " + quote(to_server(name)));
        if (r.ok)
            return;
        if (contains_ci(r.status_line, "ALREADYEXISTS") || contains_ci(r.status_line, "already"))
            throw already_exists("folder " + name + " already exists");
        throw transport_error("CREATE " + name + " failed: " + r.status_line);
    }

    void select(const std::string& name)
    {
        response r = command("SELECT " + quote(to_server(name)));
        if (!r.ok)
            throw no_such_folder("cannot select " + name + ": " + r.status_line);
        selected_ = name;
    }

    /// Child folder names (full canonical paths) one level below `name`.
    std::vector<std::string> list_children(const std::string& name)
    {
        std::string pattern = to_server(name);
        pattern.push_back(delimiter_);
        pattern.push_back('%');
        response r = command("LIST \"\" " + quote(pattern));
        if (!r.ok)
            throw transport_error("LIST failed: " + r.status_line);
        std::vector<std::string> out;
        for (const auto& line : r.untagged) {
            auto parsed = parse_list_line(line);
            if (!parsed)
                continue;
            std::string canonical = *parsed;
            if (delimiter_ != '/')
                for (char& c : canonical)
                    if (c == delimiter_)
                        c = '/';
            out.push_back(std::move(canonical));
        }
        return out;
    }

    bool exists(const std::string& name)
    {
        response r = command("LIST \"\" " + quote(to_server(name)));
        if (!r.ok)
            throw transport_error("LIST failed: " + r.status_line);
        for (const auto& line : r.untagged)
            if (parse_list_line(line))
                return true;
        return false;
    }

    void delete_folder(const std::string& name)
    {
        response r = command("DELETE " + quote(to_server(name)));
        if (!r.ok) {
            if (contains_ci(r.status_line, "nonexistent") ||
                contains_ci(r.status_line, "no such"))
                throw no_such_folder("no folder " + name);
            throw transport_error("DELETE " + name + " failed: " + r.status_line);
        }
    }

    std::vector<std::uint64_t> search_all(const std::string& mailbox)
    {
        ensure_selected(mailbox);
        response r = command("UID SEARCH ALL");
        if (!r.ok)
            throw transport_error("UID SEARCH failed: " + r.status_line);
        std::vector<std::uint64_t> uids;
        for (const auto& line : r.untagged) {
            if (line.rfind("* SEARCH", 0) != 0)
                continue;
            std::size_t pos = 8;
            while (pos < line.size()) {
                while (pos < line.size() && line[pos] == ' ')
                    pos++;
                std::size_t start = pos;
                while (pos < line.size() && line[pos] >= '0' && line[pos] <= '9')
                    pos++;
                if (pos > start)
                    uids.push_back(std::strtoull(line.substr(start, pos - start).c_str(), nullptr, 10));
                else
                    pos++;
            }
        }
        return uids;
    }

    std::string fetch_raw(const std::string& mailbox, std::uint64_t uid)
    {
        ensure_selected(mailbox);
        response r = command("UID FETCH " + std::to_string(uid) + " (BODY.PEEK[])");
        if (!r.ok)
            throw no_such_message("UID FETCH " + std::to_string(uid) + " failed: " + r.status_line);
        for (const auto& lit : r.literals)
            if (!lit.empty())
                return lit;
        throw no_such_message("no message with uid " + std::to_string(uid) + " in " + mailbox);
    }

    void delete_message(const std::string& mailbox, std::uint64_t uid)
    {
        ensure_selected(mailbox);
        response r = command("UID STORE " + std::to_string(uid) + " +FLAGS.SILENT (\\Deleted)");
        if (!r.ok)
            throw no_such_message("UID STORE failed: " + r.status_line);
        r = command("UID EXPUNGE " + std::to_string(uid));
        if (!r.ok) {
            r = command("EXPUNGE"); // UIDPLUS not offered
            if (!r.ok)
                throw transport_error("EXPUNGE failed: " + r.status_line);
        }
    }

    /// Returns the new uid when the server reports COPYUID, 0 otherwise.
    std::uint64_t move(const std::string& mailbox, std::uint64_t uid, const std::string& dest)
    {
        ensure_selected(mailbox);
        response r = command("UID MOVE " + std::to_string(uid) + " " + quote(to_server(dest)));
        if (!r.ok) {
            // MOVE is an extension; fall back to COPY + delete
            r = command("UID COPY " + std::to_string(uid) + " " + quote(to_server(dest)));
            if (!r.ok)
                throw transport_error("UID COPY failed: " + r.status_line);
            delete_message(mailbox, uid);
        }
        return parse_copyuid(r);
    }

private:
    struct response {
        bool ok = false;
        std::string status_line;
        std::vector<std::string> untagged;
        std::vector<std::string> literals;
    };

    std::string next_tag() { return "A" + std::to_string(++tag_); }

    response command(const std::string& text)
    {
        std::string tag = next_tag();
        stream_.write_all(tag + " " + text + "\r\n");
        response r;
        while (true) {
            std::string line = stream_.read_line();
            // a line ending in {N} announces N literal octets before it continues
            while (true) {
                std::size_t open = line.rfind('{');
                if (open == std::string::npos || line.back() != '}')
                    break;
                std::uint64_t n =
                    std::strtoull(line.substr(open + 1, line.size() - open - 2).c_str(), nullptr, 10);
                r.literals.push_back(stream_.read_exact(n));
                line += stream_.read_line();
            }
            if (line.rfind(tag + " ", 0) == 0) {
                r.status_line = line.substr(tag.size() + 1);
                r.ok = r.status_line.rfind("OK", 0) == 0;
                return r;
            }
            r.untagged.push_back(line);
        }
    }

    void ensure_selected(const std::string& mailbox)
    {
        if (selected_ != mailbox)
            select(mailbox);
    }

    void detect_delimiter()
    {
        response r = command("LIST \"\" \"\"");
        for (const auto& line : r.untagged) {
            // * LIST (\Noselect) "/" ""
            std::size_t q = line.find('"');
            if (q != std::string::npos && q + 1 < line.size() && line[q + 1] != '"')
                delimiter_ = line[q + 1];
        }
    }

    static std::string quote(std::string_view text)
    {
        std::string out;
        out.reserve(text.size() + 2);
        out.push_back('"');
        for (char c : text) {
            if (c == '"' || c == '\\')
                out.push_back('\\');
            out.push_back(c);
        }
        out.push_back('"');
        return out;
    }

    static bool contains_ci(std::string_view haystack, std::string_view needle)
    {
        if (needle.empty() || haystack.size() < needle.size())
            return false;
        for (std::size_t i = 0; i + needle.size() <= haystack.size(); i++) {
            bool hit = true;
            for (std::size_t j = 0; j < needle.size(); j++) {
                char a = haystack[i + j], b = needle[j];
                if (a >= 'A' && a <= 'Z')
                    a = static_cast<char>(a - 'A' + 'a');
                if (b >= 'A' && b <= 'Z')
                    b = static_cast<char>(b - 'A' + 'a');
                if (a != b) {
                    hit = false;
                    break;
                }
            }
            if (hit)
                return true;
        }
        return false;
    }

    /// Extracts the mailbox name from one untagged LIST reply.
    static std::optional<std::string> parse_list_line(const std::string& line)
    {
        if (line.rfind("* LIST", 0) != 0)
            return std::nullopt;
        std::size_t close = line.find(')');
        if (close == std::string::npos)
            return std::nullopt;
        std::size_t pos = close + 1;
        auto skip_spaces = [&] {
            while (pos < line.size() && line[pos] == ' ')
                pos++;
        };
        skip_spaces();
        // delimiter field: quoted char or NIL
        if (pos < line.size() && line[pos] == '"') {
            pos = line.find('"', pos + 1);
            if (pos == std::string::npos)
                return std::nullopt;
            pos++;
        } else {
            while (pos < line.size() && line[pos] != ' ')
                pos++;
        }
        skip_spaces();
        if (pos >= line.size())
            return std::nullopt;
        if (line[pos] == '"') {
            std::string name;
            for (pos++; pos < line.size(); pos++) {
                if (line[pos] == '\\' && pos + 1 < line.size()) {
                    name.push_back(line[++pos]);
                } else if (line[pos] == '"') {
                    return name;
                } else {
                    name.push_back(line[pos]);
                }
            }
            return std::nullopt;
        }
        return line.substr(pos);
    }

    static std::uint64_t parse_copyuid(const response& r)
    {
        auto scan = [](const std::string& line) -> std::uint64_t {
            std::size_t pos = line.find("COPYUID ");
            if (pos == std::string::npos)
                return 0;
            // COPYUID <validity> <source-set> <dest-set>
            std::istringstream in(line.substr(pos + 8));
            std::string validity, src, dst;
            in >> validity >> src >> dst;
            if (!dst.empty() && dst.back() == ']')
                dst.pop_back();
            std::size_t sep = dst.find_first_of(":,");
            if (sep != std::string::npos)
                dst = dst.substr(0, sep);
            return std::strtoull(dst.c_str(), nullptr, 10);
        };
        if (std::uint64_t uid = scan(r.status_line); uid != 0)
            return uid;
        for (const auto& line : r.untagged)
            if (std::uint64_t uid = scan(line); uid != 0)
                return uid;
        return 0;
    }

    tcp_stream stream_;
    int tag_ = 0;
    char delimiter_ = '/';
    std::string selected_;
};

/**
Session over a live SMTP + IMAP connection pair.
**/
class net_session : public session {
public:
    net_session(const provider_profile& profile, const std::string& password, bool verify_peer) :
        smtp_(profile.smtp_host, profile.smtp_port, profile.use_tls, profile.username, password,
              verify_peer),
        imap_(profile.imap_host, profile.imap_port, profile.use_tls, profile.username, password,
              verify_peer),
        self_(profile.username)
    {
    }

    void create_folder(const mailbox_path& path) override
    {
        if (!path.is_toplevel() && !imap_.exists(path.parent().wire_name()))
            throw no_parent("parent of " + path.wire_name() + " does not exist");
        imap_.create(path.wire_name());
    }

    void select_folder(const mailbox_path& path) override { imap_.select(path.wire_name()); }

    std::vector<mailbox_path> list_folders(const mailbox_path& path) override
    {
        std::vector<mailbox_path> out;
        for (const auto& full : imap_.list_children(path.wire_name())) {
            std::size_t slash = full.rfind('/');
            out.push_back(path.child(slash == std::string::npos ? full : full.substr(slash + 1)));
        }
        return out;
    }

    void delete_folder(const mailbox_path& path) override
    {
        if (!imap_.exists(path.wire_name()))
            throw no_such_folder("no folder " + path.wire_name());
        if (!imap_.list_children(path.wire_name()).empty())
            throw has_subfolders("folder " + path.wire_name() + " has subfolders");
        imap_.delete_folder(path.wire_name());
    }

    void send_message(const emfs_message& message) override
    {
        smtp_.send(message.from, message.to, serialize(message));
    }

    std::string fetch_message(const message_handle& handle) override
    {
        return imap_.fetch_raw(handle.mailbox.wire_name(), handle.uid);
    }

    std::vector<std::pair<message_handle, message_summary>>
    list_messages(const mailbox_path& path) override
    {
        std::vector<std::pair<message_handle, message_summary>> out;
        for (std::uint64_t uid : imap_.search_all(path.wire_name())) {
            std::string wire = imap_.fetch_raw(path.wire_name(), uid);
            auto fields = emfs::detail::split_wire(wire);
            if (!fields.has_filename || !fields.has_next)
                continue;
            message_summary summary;
            summary.subject = fields.subject;
            summary.filename = fields.filename;
            summary.next_id = fields.next_id;
            summary.body_size = emfs::detail::payload_octets(fields.body);
            summary.raw_size = wire.size();
            out.emplace_back(message_handle{path, uid}, std::move(summary));
        }
        return out;
    }

    message_handle move_message(const message_handle& handle, const mailbox_path& dest) override
    {
        std::uint64_t uid = imap_.move(handle.mailbox.wire_name(), handle.uid, dest.wire_name());
        return message_handle{dest, uid};
    }

    void delete_message(const message_handle& handle) override
    {
        imap_.delete_message(handle.mailbox.wire_name(), handle.uid);
    }

private:
    smtp_client smtp_;
    imap_client imap_;
    std::string self_;
};

/**
Real-network backend: resolves the password from the profile's
credential_ref environment variable and opens authenticated SMTP and
IMAP connections, upgrading both with STARTTLS when requested.
**/
class net_transport : public transport {
public:
    explicit net_transport(bool verify_peer = true) : verify_peer_(verify_peer) {}

    std::unique_ptr<session> connect_and_login(const provider_profile& profile) override
    {
        std::string password = resolve_credential(profile);
        return std::make_unique<net_session>(profile, password, verify_peer_);
    }

private:
    bool verify_peer_;
};

} // namespace emfs::net
