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
#include <stdexcept>
#include <string>

namespace emfs {

/**
Base class for every error raised by the library.

`name()` returns a stable class identifier ("NoSuchFile", "BrokenChain", ...)
used by the CLI for error reporting and exit-code mapping.
**/
class error : public std::runtime_error {
public:
    error(std::string name, const std::string& what_arg) :
        std::runtime_error(what_arg), name_(std::move(name))
    {
    }

    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

// codec errors

class malformed_encoding : public error {
public:
    explicit malformed_encoding(const std::string& msg) : error("MalformedEncoding", msg) {}
};

class not_an_emfs_message : public error {
public:
    explicit not_an_emfs_message(const std::string& msg) : error("NotAnEmfsMessage", msg) {}
};

class malformed_header : public error {
public:
    explicit malformed_header(const std::string& msg) : error("MalformedHeader", msg) {}
};

// transport errors

class connect_failed : public error {
public:
    explicit connect_failed(const std::string& msg) : error("ConnectFailed", msg) {}
};

class auth_failed : public error {
public:
    explicit auth_failed(const std::string& msg) : error("AuthFailed", msg) {}
};

class tls_unavailable : public error {
public:
    explicit tls_unavailable(const std::string& msg) : error("TlsUnavailable", msg) {}
};

class already_exists : public error {
public:
    explicit already_exists(const std::string& msg) : error("AlreadyExists", msg) {}
};

class no_parent : public error {
public:
    explicit no_parent(const std::string& msg) : error("NoParent", msg) {}
};

class no_such_folder : public error {
public:
    explicit no_such_folder(const std::string& msg) : error("NoSuchFolder", msg) {}
};

class has_subfolders : public error {
public:
    explicit has_subfolders(const std::string& msg) : error("HasSubfolders", msg) {}
};

class message_too_large : public error {
public:
    explicit message_too_large(const std::string& msg) : error("MessageTooLarge", msg) {}
};

class transport_error : public error {
public:
    explicit transport_error(const std::string& msg) : error("TransportError", msg) {}
};

class no_such_message : public error {
public:
    explicit no_such_message(const std::string& msg) : error("NoSuchMessage", msg) {}
};

class fault_injected : public error {
public:
    explicit fault_injected(const std::string& msg) : error("FaultInjected", msg) {}
};

// filesystem errors

class invalid_name : public error {
public:
    explicit invalid_name(const std::string& msg) : error("InvalidName", msg) {}
};

class file_exists : public error {
public:
    explicit file_exists(const std::string& msg) : error("FileExists", msg) {}
};

class no_such_file : public error {
public:
    explicit no_such_file(const std::string& msg) : error("NoSuchFile", msg) {}
};

class root_create_failed : public error {
public:
    explicit root_create_failed(const std::string& msg) : error("RootCreateFailed", msg) {}
};

/**
Raised when a chain upload fails after at least one message was already
accepted. The chain is incomplete; already-sent messages have been removed
best-effort.
**/
class partial_upload : public error {
public:
    partial_upload(const std::string& msg, std::uint64_t delivered, std::uint64_t expected) :
        error("PartialUpload", msg), delivered_(delivered), expected_(expected)
    {
    }

    std::uint64_t delivered() const noexcept { return delivered_; }
    std::uint64_t expected() const noexcept { return expected_; }

private:
    std::uint64_t delivered_;
    std::uint64_t expected_;
};

/**
Raised when following a chain's next links fails to resolve a message.
`position()` is the zero-based chain index that could not be resolved;
`remaining()` is how many chain members past that point are unaccounted for.
**/
class broken_chain : public error {
public:
    broken_chain(const std::string& msg, std::uint64_t position, std::uint64_t remaining) :
        error("BrokenChain", msg), position_(position), remaining_(remaining)
    {
    }

    std::uint64_t position() const noexcept { return position_; }
    std::uint64_t remaining() const noexcept { return remaining_; }

private:
    std::uint64_t position_;
    std::uint64_t remaining_;
};

// configuration errors

class bad_config : public error {
public:
    explicit bad_config(const std::string& msg) : error("BadConfig", msg) {}
};

class missing_credential : public error {
public:
    explicit missing_credential(const std::string& msg) : error("MissingCredential", msg) {}
};

} // namespace emfs
