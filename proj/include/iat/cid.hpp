#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "iat/object_model.hpp"

namespace iat::cid {

// A readable/writable property exposed as an LWM2M resource.
struct FieldResource {
    std::uint16_t id = 0;
    std::string name;
    model::ValueType value_type = model::ValueType::Boolean;
    model::ResourceOps operations;
    model::InstanceKind instance_kind = model::InstanceKind::Single;
    bool mandatory = true;
    std::string units;
    std::string range;
    std::string description;
    bool observable = false;

    friend bool operator==(const FieldResource&, const FieldResource&) = default;
};

// A method exposed as an execute-only resource; always carries exactly {EXECUTE}.
struct OperationResource {
    std::uint16_t id = 0;
    std::string name;
    std::string description;

    friend bool operator==(const OperationResource&, const OperationResource&) = default;
};

// A reference to a constituent component, exposed as a nested object instance.
struct ObjectInstanceEntry {
    std::uint16_t id = 0;
    std::string name;
    // Either a numeric object type id or the name of a type declared in the document.
    std::variant<std::uint16_t, std::string> object_type;

    friend bool operator==(const ObjectInstanceEntry&, const ObjectInstanceEntry&) = default;
};

using CidEntry = std::variant<FieldResource, OperationResource, ObjectInstanceEntry>;

struct CidObjectType {
    std::string name;
    std::uint16_t id = 0;
    model::InstanceKind instance_kind = model::InstanceKind::Single;
    bool mandatory = true;
    std::string description;
    std::vector<CidEntry> entries;

    friend bool operator==(const CidObjectType&, const CidObjectType&) = default;
};

struct CidDocument {
    std::string component_name;
    std::string root_type;
    std::vector<CidObjectType> object_types;

    const CidObjectType* find_type(std::string_view name) const;

    friend bool operator==(const CidDocument&, const CidDocument&) = default;
};

// How the root type reveals functionality: top-level methods, references to
// constituent parts, or both.
enum class ExposureStyle { Method, Reference, Hybrid };

const char* to_string(ExposureStyle style);

// Parses the CID text form. Line-oriented blocks:
//   component NAME [root=NAME];
//   object-type NAME id=N [single|multiple] [mandatory|optional] [description="..."] { entries }
// with entries
//   resource NAME id=N ops=[read|write|execute,...] [type=T] [single|multiple]
//            [mandatory|optional] [units="..."] [range="..."] [description="..."] [observable];
//   instance NAME id=N type=TYPEREF;
// '#' starts a comment; the semicolon on the last entry of a block may be omitted.
// Throws ParseError with a line number.
CidDocument parse_cid(std::string_view text);

// Canonical text form: fixed attribute order, defaults omitted, entries
// semicolon-terminated. parse_cid(render_cid(doc)) == doc, byte-stable.
std::string render_cid(const CidDocument& doc);

ExposureStyle classify_exposure(const CidDocument& doc);

// Lowers every object type to its LWM2M descriptor. Operation resources become
// execute-only boolean resources; instance entries become instance refs with
// type names resolved against the document. Throws BuildError when a type name
// cannot be resolved.
std::vector<model::ObjectTypeDescriptor> lower_to_descriptors(const CidDocument& doc);

}  // namespace iat::cid
