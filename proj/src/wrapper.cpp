#include "tapsb/wrapper.hpp"

#include <fmt/format.h>

#include "tapsb/ids.hpp"
#include "tapsb/transform.hpp"

namespace tapsb {

Value WrapperHeader::encode() const {
  return Value::list({Value::text(function), Value::text(transformer_spec), Value::text(filter_spec),
                      Value::integer(nargs)});
}

WrapperHeader WrapperHeader::decode(const Value& v) {
  const auto& l = v.as_list();
  if (l.size() != 4) throw Error(ErrorKind::Serialization, "bad wrapper header");
  return {l[0].as_text(), l[1].as_text(), l[2].as_text(), l[3].as_int()};
}

Value WrapperEnvelope::encode() const {
  return Value::list({result, Value::integer(transformed ? 1 : 0), Value::integer(exec_started_at),
                      Value::integer(exec_ended_at), Value::integer(resolve_args_us),
                      Value::integer(transform_result_us), Value::integer(arg_bytes), Value::integer(result_bytes)});
}

WrapperEnvelope WrapperEnvelope::decode(const Value& v) {
  const auto& l = v.as_list();
  if (l.size() != 8) throw Error(ErrorKind::Serialization, "bad wrapper envelope");
  WrapperEnvelope e;
  e.result = l[0];
  e.transformed = l[1].as_int() != 0;
  e.exec_started_at = l[2].as_int();
  e.exec_ended_at = l[3].as_int();
  e.resolve_args_us = l[4].as_int();
  e.transform_result_us = l[5].as_int();
  e.arg_bytes = l[6].as_int();
  e.result_bytes = l[7].as_int();
  return e;
}

namespace {

Value resolve_value(const Value& v, Transformer* t) {
  if (!v.is(TypeTag::Ident)) return v;
  if (t == nullptr) {
    throw Error(ErrorKind::Resolution,
                fmt::format("identifier {} received but no transformer is configured", v.as_ident().locator));
  }
  return t->resolve(v.as_ident());
}

Value run_wrapped(std::span<const Value> args) {
  if (args.empty()) throw Error(ErrorKind::Argument, "wrapper called without a header");
  const WrapperHeader header = WrapperHeader::decode(args[0]);
  if (header.nargs < 0 || static_cast<std::size_t>(header.nargs) > args.size() - 1) {
    throw Error(ErrorKind::Argument, "wrapper header argument count out of range");
  }
  const TaskFunction fn = TaskRegistry::global().find(header.function);

  WrapperEnvelope env;
  env.exec_started_at = wall_now_us();
  const auto transformer = transformer_from_spec(header.transformer_spec);

  const auto t0 = mono_now_us();
  std::vector<Value> real;
  real.reserve(static_cast<std::size_t>(header.nargs));
  for (std::size_t i = 1; i <= static_cast<std::size_t>(header.nargs); ++i) {
    const Value& a = args[i];
    if (a.is(TypeTag::List)) {
      bool any_ident = false;
      for (const auto& item : a.as_list()) any_ident = any_ident || item.is(TypeTag::Ident);
      if (!any_ident) {
        real.push_back(a);
        continue;
      }
      Value::List items;
      for (const auto& item : a.as_list()) items.push_back(resolve_value(item, transformer.get()));
      real.push_back(Value::list(std::move(items)));
    } else {
      real.push_back(resolve_value(a, transformer.get()));
    }
  }
  env.resolve_args_us = transformer ? mono_now_us() - t0 : 0;
  for (const auto& a : real) env.arg_bytes += static_cast<std::int64_t>(encoded_size(a));

  Value result = fn(real);
  env.exec_ended_at = wall_now_us();
  env.result_bytes = static_cast<std::int64_t>(encoded_size(result));

  if (transformer && filter_check(FilterSpec::parse(header.filter_spec), result)) {
    const auto t1 = mono_now_us();
    env.result = Value::ident(transformer->transform(result));
    env.transform_result_us = mono_now_us() - t1;
    env.transformed = true;
  } else {
    env.result = std::move(result);
  }
  return env.encode();
}

}  // namespace

void register_wrapper_task(TaskRegistry& r) { r.add(kTaskWrapper, run_wrapped); }

}  // namespace tapsb
