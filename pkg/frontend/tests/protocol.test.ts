import { describe, expect, it } from "vitest";

import {
  eventRecordFor,
  extractPayload,
  validateSnapshot,
} from "../src/protocol.js";

const button = {
  kind: "tag",
  nodeId: 1,
  tagName: "button",
  attributes: [],
  handlers: [{ eventName: "click", payloadType: "1" }],
  children: [{ kind: "text", text: "Send Ping!" }],
};

describe("validateSnapshot", () => {
  it("accepts a well-formed snapshot", () => {
    expect(validateSnapshot({ revision: 0, tree: [button] })).toBeNull();
  });

  it("accepts an empty page", () => {
    expect(validateSnapshot({ revision: 0, tree: [] })).toBeNull();
  });

  it("rejects junk", () => {
    expect(validateSnapshot(null)).toMatch(/not an object/);
    expect(validateSnapshot({ tree: [] })).toMatch(/revision/);
    expect(validateSnapshot({ revision: 1, tree: [{ kind: "wat" }] })).toMatch(/unknown node kind/);
    expect(validateSnapshot({ revision: 1, tree: [{ kind: "tag", nodeId: 1 }] })).toMatch(/tagName/);
  });
});

describe("extractPayload", () => {
  it("clicks carry the unit value", () => {
    expect(extractPayload("click", {})).toBeNull();
  });

  it("input carries the field text", () => {
    expect(extractPayload("input", { value: "abc" })).toBe("abc");
    expect(extractPayload("input", {})).toBeUndefined();
  });

  it("key events carry the key code", () => {
    expect(extractPayload("keyDown", { keyCode: 75 })).toBe(75);
    expect(extractPayload("keyUp", { keyCode: 75 })).toBe(75);
    expect(extractPayload("keyUp", {})).toBeUndefined();
  });

  it("unknown events produce nothing", () => {
    expect(extractPayload("wheel", {})).toBeUndefined();
  });
});

describe("eventRecordFor", () => {
  it("builds at most one record per gesture", () => {
    const rec = eventRecordFor({ eventName: "click", payloadType: "1" }, 7, {});
    expect(rec).toEqual({ target: 7, event: "click", payload: null });
    expect(eventRecordFor({ eventName: "input", payloadType: "String" }, 7, {})).toBeNull();
  });
});
