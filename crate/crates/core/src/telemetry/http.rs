use serde_json::{json, Map, Value};

use super::{
    AggregateQuery, BucketUnit, Channel, ChannelId, FeedEntry, FeedQuery, Statistic, TelemetryError, TelemetryService,
};
use crate::clock;
use crate::device::UPDATE_PATH;
use crate::modem::{HttpMethod, HttpReply};

/// Decoded `k=v` pairs in order.
pub fn parse_query(query: &str) -> Vec<(String, String)> {
    form_urlencoded::parse(query.as_bytes()).into_owned().collect()
}

/// Serves one request. `target` is path plus query.
pub fn route(svc: &TelemetryService, method: HttpMethod, target: &str, now_ms: u64) -> HttpReply {
    let (path, query) = target.split_once('?').unwrap_or((target, ""));
    let params = parse_query(query);
    let reply = if path == UPDATE_PATH {
        HttpReply::new(200, svc.handle_update(&params, now_ms).to_string())
    } else if method == HttpMethod::Post {
        not_found()
    } else {
        match path.strip_prefix("/channels/").and_then(|p| p.split_once('/')) {
            Some((id, resource)) => match id.parse::<u32>() {
                Ok(id) => channel_resource(svc, ChannelId(id), resource, &params),
                Err(_) => not_found(),
            },
            None => not_found(),
        }
    };
    if method == HttpMethod::Head {
        HttpReply::new(reply.status, "")
    } else {
        reply
    }
}

fn not_found() -> HttpReply {
    HttpReply::new(404, json!({"error": "not found"}).to_string())
}

fn error_reply(err: TelemetryError) -> HttpReply {
    match err {
        TelemetryError::ChannelNotFound(_) => not_found(),
        other => HttpReply::new(400, json!({"error": other.to_string()}).to_string()),
    }
}

fn get<'a>(params: &'a [(String, String)], key: &str) -> Option<&'a str> {
    params.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn num<T: std::str::FromStr>(params: &[(String, String)], key: &str) -> Result<Option<T>, TelemetryError> {
    get(params, key)
        .map(|v| {
            v.parse()
                .map_err(|_| TelemetryError::InvalidQuery(format!("bad {key}: {v:?}")))
        })
        .transpose()
}

fn channel_resource(svc: &TelemetryService, id: ChannelId, resource: &str, params: &[(String, String)]) -> HttpReply {
    let result = match resource {
        "feeds.json" => feeds(svc, id, params),
        "aggregate.json" => aggregate(svc, id, params),
        _ => return not_found(),
    };
    match result {
        Ok(body) => HttpReply::new(200, body.to_string()),
        Err(e) => error_reply(e),
    }
}

fn feeds(svc: &TelemetryService, id: ChannelId, params: &[(String, String)]) -> Result<Value, TelemetryError> {
    let query = match (
        num::<usize>(params, "results")?,
        num::<u64>(params, "start")?,
        num::<u64>(params, "end")?,
    ) {
        (Some(n), None, None) => FeedQuery::Results(n),
        (None, None, None) => FeedQuery::All,
        (None, start, end) => FeedQuery::Range {
            start_ms: start.unwrap_or(0),
            end_ms: end.unwrap_or(u64::MAX),
        },
        _ => {
            return Err(TelemetryError::InvalidQuery(
                "results and a time range are exclusive".into(),
            ))
        }
    };
    let channel = svc.channel(id)?;
    let feeds = svc.get_feed(id, query)?;
    Ok(json!({
        "channel": channel_json(&channel),
        "feeds": feeds.iter().map(entry_json).collect::<Vec<_>>(),
    }))
}

fn channel_json(channel: &Channel) -> Value {
    let mut obj = Map::new();
    obj.insert("id".into(), json!(channel.id.0));
    for (i, name) in channel.field_names.iter().enumerate() {
        obj.insert(format!("field{}", i + 1), json!(name));
    }
    if let Some(last) = channel.entries.last() {
        obj.insert("updated_at".into(), json!(clock::rfc3339(last.created_at_ms)));
    }
    obj.insert("last_entry_id".into(), json!(channel.entries.len()));
    Value::Object(obj)
}

fn entry_json(entry: &FeedEntry) -> Value {
    let mut obj = Map::new();
    obj.insert("created_at".into(), json!(clock::rfc3339(entry.created_at_ms)));
    obj.insert("entry_id".into(), json!(entry.entry_id));
    for (i, value) in entry.fields.iter().enumerate() {
        if let Some(v) = value {
            obj.insert(format!("field{}", i + 1), json!(v.to_string()));
        }
    }
    Value::Object(obj)
}

fn aggregate(svc: &TelemetryService, id: ChannelId, params: &[(String, String)]) -> Result<Value, TelemetryError> {
    let invalid = |m: String| TelemetryError::InvalidQuery(m);
    let unit = match get(params, "bucket") {
        None => BucketUnit::Minutes,
        Some(b) => BucketUnit::parse(b).ok_or_else(|| invalid(format!("unknown bucket {b:?}")))?,
    };
    let stat = match get(params, "stat") {
        None => Statistic::Average,
        Some(s) => Statistic::parse(s).ok_or_else(|| invalid(format!("unknown statistic {s:?}")))?,
    };
    let mut query = AggregateQuery::new(
        unit,
        num(params, "n")?.unwrap_or(1),
        stat,
        num(params, "field")?.unwrap_or(1),
    );
    match (num::<u64>(params, "start")?, num::<u64>(params, "end")?) {
        (Some(s), Some(e)) => query = query.with_range(s, e),
        (None, None) => {}
        _ => return Err(invalid("start and end go together".into())),
    }
    let buckets = svc.aggregate(id, &query)?;
    Ok(json!({
        "channel_id": id.0,
        "field": query.field,
        "bucket": unit.as_str(),
        "n": query.n,
        "stat": stat.as_str(),
        "buckets": buckets
            .iter()
            .map(|(start, value)| json!({"bucket_start_ms": start, "value": value}))
            .collect::<Vec<_>>(),
    }))
}
