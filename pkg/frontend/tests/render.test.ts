// @vitest-environment happy-dom
import { beforeEach, describe, expect, it } from "vitest";

import { findTag, initialState, render } from "../src/client.js";
import { EventRecord, Snapshot } from "../src/protocol.js";

function snapshot(tree: Snapshot["tree"], revision = 0): Snapshot {
  return { revision, tree };
}

const enabledButton = {
  kind: "tag" as const,
  nodeId: 1,
  tagName: "button",
  attributes: [],
  handlers: [{ eventName: "click", payloadType: "1" }],
  children: [{ kind: "text" as const, text: "Send Ping!" }],
};

const disabledButton = {
  ...enabledButton,
  attributes: [{ key: "disabled", value: "true" }],
  handlers: [],
};

describe("render", () => {
  let root: Element;
  let posted: EventRecord[];

  beforeEach(() => {
    document.body.innerHTML = '<div id="mvu-banner"></div><div id="mvu-root"></div>';
    root = document.getElementById("mvu-root")!;
    posted = [];
  });

  const post = (r: EventRecord) => posted.push(r);

  it("renders an empty snapshot to an empty page", () => {
    const state = render(snapshot([]), root, initialState(), post);
    expect(root.children.length).toBe(0);
    expect(state.status).toBe("live");
  });

  it("an enabled button posts one click event per gesture", () => {
    render(snapshot([enabledButton]), root, initialState(), post);
    const btn = root.querySelector("button")!;
    expect(btn.textContent).toBe("Send Ping!");
    btn.dispatchEvent(new Event("click", { bubbles: true }));
    expect(posted).toEqual([{ target: 1, event: "click", payload: null }]);
  });

  it("a disabled snapshot produces no posts on click", () => {
    render(snapshot([disabledButton], 1), root, initialState(), post);
    const btn = root.querySelector("button")!;
    expect(btn.getAttribute("disabled")).toBe("true");
    btn.dispatchEvent(new Event("click", { bubbles: true }));
    expect(posted).toEqual([]);
  });

  it("input handlers extract the field text", () => {
    const inputNode = {
      kind: "tag" as const,
      nodeId: 4,
      tagName: "input",
      attributes: [{ key: "value", value: "" }],
      handlers: [{ eventName: "input", payloadType: "String" }],
      children: [],
    };
    render(snapshot([inputNode]), root, initialState(), post);
    const input = root.querySelector("input")! as HTMLInputElement;
    input.value = "k";
    input.dispatchEvent(new Event("input", { bubbles: true }));
    expect(posted).toEqual([{ target: 4, event: "input", payload: "k" }]);
  });

  it("a stale render is replaced wholesale on revision change", () => {
    const state = initialState();
    render(snapshot([enabledButton], 0), root, state, post);
    render(snapshot([disabledButton], 1), root, state, post);
    expect(state.revision).toBe(1);
    expect(root.querySelectorAll("button").length).toBe(1);
    expect(root.querySelector("button")!.getAttribute("disabled")).toBe("true");
  });

  it("a malformed snapshot keeps the last good render and shows the banner", () => {
    const state = initialState();
    render(snapshot([enabledButton], 0), root, state, post);
    render({ nope: true }, root, state, post);
    expect(state.status).toBe("error");
    expect(root.querySelector("button")).not.toBeNull();
    const banner = document.getElementById("mvu-banner")!;
    expect(banner.textContent).toContain("bad snapshot");
  });

  it("findTag locates nested tags", () => {
    const tree = snapshot([
      {
        kind: "tag" as const,
        nodeId: 9,
        tagName: "div",
        attributes: [],
        handlers: [],
        children: [enabledButton],
      },
    ]);
    expect(findTag(tree, "button")?.nodeId).toBe(1);
    expect(findTag(tree, "input")).toBeNull();
  });
});
