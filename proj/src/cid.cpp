#include "iat/cid.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <set>

namespace iat::cid {

using model::InstanceKind;
using model::ValueType;

const char* to_string(ExposureStyle style) {
    switch (style) {
        case ExposureStyle::Method: return "method";
        case ExposureStyle::Reference: return "reference";
        case ExposureStyle::Hybrid: return "hybrid";
    }
    return "?";
}

const CidObjectType* CidDocument::find_type(std::string_view name) const {
    for (const auto& t : object_types) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

namespace {

struct Token {
    enum class Kind { Ident, Number, String, Punct, End };
    Kind kind = Kind::End;
    std::string text;
    std::size_t line = 0;
};

class Lexer {
public:
    explicit Lexer(std::string_view text) : text_(text) {}

    Token next() {
        skip_space();
        Token tok;
        tok.line = line_;
        if (pos_ >= text_.size()) return tok;
        char c = text_[pos_];
        if (c == '{' || c == '}' || c == ';' || c == '=' || c == '[' || c == ']' || c == ',') {
            tok.kind = Token::Kind::Punct;
            tok.text = std::string(1, c);
            ++pos_;
            return tok;
        }
        if (c == '"') {
            ++pos_;
            tok.kind = Token::Kind::String;
            while (pos_ < text_.size() && text_[pos_] != '"') {
                char d = text_[pos_];
                if (d == '\n') throw ParseError(line_, "unterminated string");
                if (d == '\\' && pos_ + 1 < text_.size()) {
                    char e = text_[pos_ + 1];
                    if (e == '"' || e == '\\') {
                        tok.text.push_back(e);
                        pos_ += 2;
                        continue;
                    }
                }
                tok.text.push_back(d);
                ++pos_;
            }
            if (pos_ >= text_.size()) throw ParseError(line_, "unterminated string");
            ++pos_;  // closing quote
            return tok;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            tok.kind = Token::Kind::Number;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
                tok.text.push_back(text_[pos_++]);
            }
            return tok;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            tok.kind = Token::Kind::Ident;
            while (pos_ < text_.size()) {
                char d = text_[pos_];
                if (std::isalnum(static_cast<unsigned char>(d)) || d == '_' || d == '-') {
                    tok.text.push_back(d);
                    ++pos_;
                } else {
                    break;
                }
            }
            return tok;
        }
        throw ParseError(line_, std::string("unexpected character '") + c + "'");
    }

private:
    void skip_space() {
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (c == '\n') {
                ++line_;
                ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else if (c == '#') {
                while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
};

class Parser {
public:
    explicit Parser(std::string_view text) : lexer_(text) { advance(); }

    CidDocument parse() {
        CidDocument doc;
        bool have_component = false;
        while (cur_.kind != Token::Kind::End) {
            if (cur_.kind != Token::Kind::Ident) {
                throw ParseError(cur_.line, "expected 'object-type' or 'component'");
            }
            if (cur_.text == "component") {
                if (have_component) throw ParseError(cur_.line, "duplicate component directive");
                have_component = true;
                advance();
                doc.component_name = expect_ident("component name");
                if (accept_ident("root")) {
                    expect_punct("=");
                    doc.root_type = expect_ident("root type name");
                }
                accept_punct(";");
            } else if (cur_.text == "object-type") {
                doc.object_types.push_back(parse_object_type());
            } else {
                throw ParseError(cur_.line, "unknown keyword \"" + cur_.text + "\"");
            }
        }
        if (doc.object_types.empty()) throw ParseError(0, "no object-type declared");
        if (doc.component_name.empty()) doc.component_name = doc.object_types.front().name;
        if (doc.root_type.empty()) doc.root_type = doc.object_types.front().name;
        finish_validate(doc);
        return doc;
    }

private:
    CidObjectType parse_object_type() {
        std::size_t head_line = cur_.line;
        advance();  // object-type
        CidObjectType type;
        type.name = expect_ident("object type name");
        bool saw_id = false;
        bool saw_kind = false, saw_mandatory = false, saw_description = false;
        while (cur_.kind == Token::Kind::Ident) {
            if (cur_.text == "id") {
                if (saw_id) throw ParseError(cur_.line, "duplicate id attribute");
                saw_id = true;
                advance();
                expect_punct("=");
                type.id = expect_id16();
            } else if (cur_.text == "single" || cur_.text == "multiple") {
                if (saw_kind) throw ParseError(cur_.line, "duplicate instance-type attribute");
                saw_kind = true;
                type.instance_kind =
                    cur_.text == "single" ? InstanceKind::Single : InstanceKind::Multiple;
                advance();
            } else if (cur_.text == "mandatory" || cur_.text == "optional") {
                if (saw_mandatory) throw ParseError(cur_.line, "duplicate mandatory attribute");
                saw_mandatory = true;
                type.mandatory = cur_.text == "mandatory";
                advance();
            } else if (cur_.text == "description") {
                if (saw_description) throw ParseError(cur_.line, "duplicate description");
                saw_description = true;
                advance();
                expect_punct("=");
                type.description = expect_string("description");
            } else {
                throw ParseError(cur_.line, "unknown object-type attribute \"" + cur_.text + "\"");
            }
        }
        if (!saw_id) throw ParseError(head_line, "object-type " + type.name + " missing id");
        expect_punct("{");
        while (!(cur_.kind == Token::Kind::Punct && cur_.text == "}")) {
            if (cur_.kind != Token::Kind::Ident) {
                throw ParseError(cur_.line, "expected 'resource' or 'instance'");
            }
            if (cur_.text == "resource") {
                type.entries.push_back(parse_resource());
            } else if (cur_.text == "instance") {
                type.entries.push_back(parse_instance());
            } else {
                throw ParseError(cur_.line, "unknown entry keyword \"" + cur_.text + "\"");
            }
            // entries end with ';'; the last one before '}' may omit it
            if (cur_.kind == Token::Kind::Punct && cur_.text == ";") advance();
        }
        advance();  // '}'
        if (type.entries.empty()) {
            throw ParseError(head_line, "object-type " + type.name + " has no entries");
        }
        validate_entry_ids(type, head_line);
        return type;
    }

    CidEntry parse_resource() {
        std::size_t head_line = cur_.line;
        advance();  // resource
        std::string name = expect_ident("resource name");
        bool saw_id = false, saw_ops = false, saw_type = false;
        std::uint16_t id = 0;
        model::ResourceOps ops;
        ValueType value_type = ValueType::Boolean;
        InstanceKind kind = InstanceKind::Single;
        bool mandatory = true, observable = false;
        bool saw_kind = false, saw_mandatory = false;
        std::string units, range, description;

        while (cur_.kind == Token::Kind::Ident) {
            if (cur_.text == "id") {
                if (saw_id) throw ParseError(cur_.line, "duplicate id attribute");
                saw_id = true;
                advance();
                expect_punct("=");
                id = expect_id16();
            } else if (cur_.text == "ops") {
                if (saw_ops) throw ParseError(cur_.line, "duplicate ops attribute");
                saw_ops = true;
                advance();
                expect_punct("=");
                ops = parse_ops_list();
            } else if (cur_.text == "type") {
                if (saw_type) throw ParseError(cur_.line, "duplicate type attribute");
                saw_type = true;
                advance();
                expect_punct("=");
                value_type = parse_value_type();
            } else if (cur_.text == "single" || cur_.text == "multiple") {
                if (saw_kind) throw ParseError(cur_.line, "duplicate instance-type attribute");
                saw_kind = true;
                kind = cur_.text == "single" ? InstanceKind::Single : InstanceKind::Multiple;
                advance();
            } else if (cur_.text == "mandatory" || cur_.text == "optional") {
                if (saw_mandatory) throw ParseError(cur_.line, "duplicate mandatory attribute");
                saw_mandatory = true;
                mandatory = cur_.text == "mandatory";
                advance();
            } else if (cur_.text == "units") {
                advance();
                expect_punct("=");
                units = expect_string("units");
            } else if (cur_.text == "range") {
                advance();
                expect_punct("=");
                range = expect_string("range");
            } else if (cur_.text == "description") {
                advance();
                expect_punct("=");
                description = expect_string("description");
            } else if (cur_.text == "observable") {
                observable = true;
                advance();
            } else {
                throw ParseError(cur_.line, "unknown resource attribute \"" + cur_.text + "\"");
            }
        }
        if (!saw_id) throw ParseError(head_line, "resource " + name + " missing id");
        if (!saw_ops) throw ParseError(head_line, "resource " + name + " missing ops");
        if (ops.empty()) throw ParseError(head_line, "resource " + name + " has empty ops");

        if (ops.execute) {
            if (ops.read || ops.write) {
                throw ParseError(head_line,
                                 "resource " + name + ": execute cannot be combined with read/write");
            }
            if (observable) {
                throw ParseError(head_line, "resource " + name + ": execute resource cannot be observable");
            }
            if (saw_type && value_type != ValueType::Boolean) {
                throw ParseError(head_line,
                                 "resource " + name + ": execute resource type must be boolean");
            }
            if (saw_kind || saw_mandatory || !units.empty() || !range.empty()) {
                throw ParseError(head_line,
                                 "resource " + name + ": attribute not allowed on execute resource");
            }
            OperationResource op;
            op.id = id;
            op.name = std::move(name);
            op.description = std::move(description);
            return op;
        }

        if (!saw_type) throw ParseError(head_line, "resource " + name + " missing type");
        FieldResource field;
        field.id = id;
        field.name = std::move(name);
        field.value_type = value_type;
        field.operations = ops;
        field.instance_kind = kind;
        field.mandatory = mandatory;
        field.units = std::move(units);
        field.range = std::move(range);
        field.description = std::move(description);
        field.observable = observable;
        return field;
    }

    CidEntry parse_instance() {
        std::size_t head_line = cur_.line;
        advance();  // instance
        ObjectInstanceEntry entry;
        entry.name = expect_ident("instance name");
        bool saw_id = false, saw_type = false;
        while (cur_.kind == Token::Kind::Ident) {
            if (cur_.text == "id") {
                if (saw_id) throw ParseError(cur_.line, "duplicate id attribute");
                saw_id = true;
                advance();
                expect_punct("=");
                entry.id = expect_id16();
            } else if (cur_.text == "type") {
                if (saw_type) throw ParseError(cur_.line, "duplicate type attribute");
                saw_type = true;
                advance();
                expect_punct("=");
                if (cur_.kind == Token::Kind::Number) {
                    entry.object_type = expect_id16();
                } else if (cur_.kind == Token::Kind::Ident) {
                    entry.object_type = cur_.text;
                    advance();
                } else {
                    throw ParseError(cur_.line, "expected type id or name");
                }
            } else {
                throw ParseError(cur_.line, "unknown instance attribute \"" + cur_.text + "\"");
            }
        }
        if (!saw_id) throw ParseError(head_line, "instance " + entry.name + " missing id");
        if (!saw_type) throw ParseError(head_line, "instance " + entry.name + " missing type");
        return entry;
    }

    model::ResourceOps parse_ops_list() {
        expect_punct("[");
        model::ResourceOps ops;
        while (true) {
            std::string op = expect_ident("operation");
            if (op == "read") {
                ops.read = true;
            } else if (op == "write") {
                ops.write = true;
            } else if (op == "execute") {
                ops.execute = true;
            } else {
                throw ParseError(cur_.line, "unknown operation \"" + op + "\"");
            }
            if (cur_.kind == Token::Kind::Punct && cur_.text == ",") {
                advance();
                continue;
            }
            break;
        }
        expect_punct("]");
        return ops;
    }

    ValueType parse_value_type() {
        std::string t = expect_ident("value type");
        if (t == "boolean") return ValueType::Boolean;
        if (t == "integer") return ValueType::Integer;
        if (t == "float") return ValueType::Float;
        if (t == "string") return ValueType::String;
        if (t == "time") return ValueType::Time;
        if (t == "opaque") return ValueType::Opaque;
        throw ParseError(cur_.line, "unknown value type \"" + t + "\"");
    }

    void validate_entry_ids(const CidObjectType& type, std::size_t line) {
        std::set<std::uint16_t> resource_ids, instance_ids;
        std::set<std::string> names;
        for (const auto& entry : type.entries) {
            std::uint16_t id = 0;
            std::string name;
            bool is_instance = false;
            if (const auto* f = std::get_if<FieldResource>(&entry)) {
                id = f->id;
                name = f->name;
            } else if (const auto* o = std::get_if<OperationResource>(&entry)) {
                id = o->id;
                name = o->name;
            } else {
                const auto& inst = std::get<ObjectInstanceEntry>(entry);
                id = inst.id;
                name = inst.name;
                is_instance = true;
            }
            auto& ids = is_instance ? instance_ids : resource_ids;
            if (!ids.insert(id).second) {
                throw ParseError(line, type.name + ": duplicate " +
                                           (is_instance ? "instance" : "resource") + " id " +
                                           std::to_string(id));
            }
            if (!names.insert(name).second) {
                throw ParseError(line, type.name + ": duplicate entry name \"" + name + "\"");
            }
        }
    }

    void finish_validate(const CidDocument& doc) {
        std::set<std::string> names;
        for (const auto& t : doc.object_types) {
            if (!names.insert(t.name).second) {
                throw ParseError(0, "duplicate object type name \"" + t.name + "\"");
            }
        }
        if (!doc.find_type(doc.root_type)) {
            throw ParseError(0, "root type \"" + doc.root_type + "\" not declared");
        }
    }

    void advance() { cur_ = lexer_.next(); }

    std::string expect_ident(const char* what) {
        if (cur_.kind != Token::Kind::Ident) {
            throw ParseError(cur_.line, std::string("expected ") + what);
        }
        std::string out = cur_.text;
        advance();
        return out;
    }

    std::string expect_string(const char* what) {
        if (cur_.kind != Token::Kind::String) {
            throw ParseError(cur_.line, std::string("expected quoted ") + what);
        }
        std::string out = cur_.text;
        advance();
        return out;
    }

    std::uint16_t expect_id16() {
        if (cur_.kind != Token::Kind::Number) throw ParseError(cur_.line, "expected number");
        std::uint32_t value = 0;
        auto [ptr, ec] =
            std::from_chars(cur_.text.data(), cur_.text.data() + cur_.text.size(), value);
        if (ec != std::errc() || value > 65535) {
            throw ParseError(cur_.line, "id " + cur_.text + " out of range (0..65535)");
        }
        advance();
        return static_cast<std::uint16_t>(value);
    }

    bool accept_ident(std::string_view text) {
        if (cur_.kind == Token::Kind::Ident && cur_.text == text) {
            advance();
            return true;
        }
        return false;
    }

    void expect_punct(std::string_view text) {
        if (cur_.kind != Token::Kind::Punct || cur_.text != text) {
            throw ParseError(cur_.line, "expected '" + std::string(text) + "'");
        }
        advance();
    }

    void accept_punct(std::string_view text) {
        if (cur_.kind == Token::Kind::Punct && cur_.text == text) advance();
    }

    Lexer lexer_;
    Token cur_;
};

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

const char* value_type_keyword(ValueType t) { return model::to_string(t); }

}  // namespace

CidDocument parse_cid(std::string_view text) { return Parser(text).parse(); }

std::string render_cid(const CidDocument& doc) {
    std::string out;
    out += "component " + doc.component_name + " root=" + doc.root_type + ";\n";
    for (const auto& type : doc.object_types) {
        out += "object-type " + type.name + " id=" + std::to_string(type.id);
        if (type.instance_kind == InstanceKind::Multiple) out += " multiple";
        if (!type.mandatory) out += " optional";
        if (!type.description.empty()) out += " description=" + quote(type.description);
        out += " {\n";
        for (const auto& entry : type.entries) {
            out += "  ";
            if (const auto* f = std::get_if<FieldResource>(&entry)) {
                out += "resource " + f->name + " id=" + std::to_string(f->id) + " ops=[";
                bool first = true;
                for (const char* op : {"read", "write"}) {
                    bool set = (op[0] == 'r') ? f->operations.read : f->operations.write;
                    if (set) {
                        if (!first) out += ",";
                        out += op;
                        first = false;
                    }
                }
                out += "] type=";
                out += value_type_keyword(f->value_type);
                if (f->instance_kind == InstanceKind::Multiple) out += " multiple";
                if (!f->mandatory) out += " optional";
                if (!f->units.empty()) out += " units=" + quote(f->units);
                if (!f->range.empty()) out += " range=" + quote(f->range);
                if (!f->description.empty()) out += " description=" + quote(f->description);
                if (f->observable) out += " observable";
            } else if (const auto* o = std::get_if<OperationResource>(&entry)) {
                out += "resource " + o->name + " id=" + std::to_string(o->id) + " ops=[execute]";
                if (!o->description.empty()) out += " description=" + quote(o->description);
            } else {
                const auto& inst = std::get<ObjectInstanceEntry>(entry);
                out += "instance " + inst.name + " id=" + std::to_string(inst.id) + " type=";
                if (const auto* id = std::get_if<std::uint16_t>(&inst.object_type)) {
                    out += std::to_string(*id);
                } else {
                    out += std::get<std::string>(inst.object_type);
                }
            }
            out += ";\n";
        }
        out += "}\n";
    }
    return out;
}

ExposureStyle classify_exposure(const CidDocument& doc) {
    const auto* root = doc.find_type(doc.root_type);
    bool has_instance = false, has_operation = false;
    if (root) {
        for (const auto& entry : root->entries) {
            if (std::holds_alternative<ObjectInstanceEntry>(entry)) has_instance = true;
            if (std::holds_alternative<OperationResource>(entry)) has_operation = true;
        }
    }
    if (has_instance && has_operation) return ExposureStyle::Hybrid;
    if (has_instance) return ExposureStyle::Reference;
    return ExposureStyle::Method;
}

std::vector<model::ObjectTypeDescriptor> lower_to_descriptors(const CidDocument& doc) {
    std::map<std::string, std::uint16_t> ids_by_name;
    for (const auto& t : doc.object_types) ids_by_name[t.name] = t.id;

    std::vector<model::ObjectTypeDescriptor> out;
    out.reserve(doc.object_types.size());
    for (const auto& type : doc.object_types) {
        model::ObjectTypeDescriptor d;
        d.name = type.name;
        d.id = type.id;
        d.instance_kind = type.instance_kind;
        d.mandatory = type.mandatory;
        d.description = type.description;
        for (const auto& entry : type.entries) {
            if (const auto* f = std::get_if<FieldResource>(&entry)) {
                model::ResourceDescriptor r;
                r.id = f->id;
                r.name = f->name;
                r.operations = f->operations;
                r.instance_kind = f->instance_kind;
                r.mandatory = f->mandatory;
                r.value_type = f->value_type;
                r.range = f->range;
                r.units = f->units;
                r.description = f->description;
                r.observable = f->observable;
                d.resources.push_back(std::move(r));
            } else if (const auto* o = std::get_if<OperationResource>(&entry)) {
                model::ResourceDescriptor r;
                r.id = o->id;
                r.name = o->name;
                r.operations = model::ops_execute();
                r.value_type = model::ValueType::Boolean;
                r.description = o->description;
                d.resources.push_back(std::move(r));
            } else {
                const auto& inst = std::get<ObjectInstanceEntry>(entry);
                model::InstanceRefDescriptor ref;
                ref.id = inst.id;
                ref.name = inst.name;
                if (const auto* id = std::get_if<std::uint16_t>(&inst.object_type)) {
                    ref.object_type_id = *id;
                } else {
                    const auto& name = std::get<std::string>(inst.object_type);
                    auto it = ids_by_name.find(name);
                    if (it == ids_by_name.end()) {
                        throw BuildError(type.name + "." + inst.name +
                                         ": unresolvable instance type \"" + name + "\"");
                    }
                    ref.object_type_id = it->second;
                }
                d.instance_refs.push_back(std::move(ref));
            }
        }
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace iat::cid
