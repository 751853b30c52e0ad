import { describe, expect, it } from "vitest";

import { SseParser } from "../src/sse.js";

describe("SSE parsing", () => {
  it("parses a complete event", () => {
    const parser = new SseParser();
    const events = parser.feed('event: alert\ndata: {"x": 1}\n\n');
    expect(events).toEqual([{ event: "alert", data: { x: 1 } }]);
  });

  it("reassembles events split across chunks", () => {
    const parser = new SseParser();
    expect(parser.feed("event: snap")).toEqual([]);
    expect(parser.feed("shot\ndata: {\"alerts\":")).toEqual([]);
    const events = parser.feed(" []}\n\n");
    expect(events).toEqual([{ event: "snapshot", data: { alerts: [] } }]);
  });

  it("ignores keep-alive comments", () => {
    const parser = new SseParser();
    expect(parser.feed(": ping\n\n: ping\n\n")).toEqual([]);
  });

  it("handles several events in one chunk", () => {
    const parser = new SseParser();
    const events = parser.feed(
      'event: a\ndata: 1\n\nevent: b\ndata: 2\n\n');
    expect(events.map((e) => e.event)).toEqual(["a", "b"]);
    expect(events.map((e) => e.data)).toEqual([1, 2]);
  });

  it("joins multi-line data and keeps non-JSON as text", () => {
    const parser = new SseParser();
    const events = parser.feed("event: note\ndata: first\ndata: second\n\n");
    expect(events).toEqual([{ event: "note", data: "first\nsecond" }]);
  });

  it("resets the event name between events", () => {
    const parser = new SseParser();
    const events = parser.feed('event: alert\ndata: 1\n\ndata: 2\n\n');
    expect(events[1]).toEqual({ event: "message", data: 2 });
  });
});
