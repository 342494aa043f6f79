// Renders snapshots into live DOM and wires advertised handlers back to the
// bridge. Every revision replaces the rendered tree wholesale: the
// interpreter already diffs semantically, the client stays dumb.

import {
  EventRecord,
  Snapshot,
  SnapshotNode,
  TagNode,
  eventRecordFor,
  validateSnapshot,
} from "./protocol.js";

export type PostEvent = (record: EventRecord) => void;

export interface ClientState {
  revision: number;
  nodes: Map<number, Element>;
  status: "connecting" | "live" | "error";
  lastError: string | null;
}

export function initialState(): ClientState {
  return { revision: -1, nodes: new Map(), status: "connecting", lastError: null };
}

const DOM_EVENT_NAME: Record<string, string> = {
  click: "click",
  input: "input",
  keyUp: "keyup",
  keyDown: "keydown",
};

function buildNode(doc: Document, node: SnapshotNode, state: ClientState, post: PostEvent): Node {
  if (node.kind === "text") {
    return doc.createTextNode(node.text);
  }
  const el = doc.createElement(node.tagName);
  for (const attr of node.attributes) {
    el.setAttribute(attr.key, attr.value);
    if (attr.key === "value" && "value" in el) {
      (el as HTMLInputElement).value = attr.value;
    }
  }
  for (const handler of node.handlers) {
    const domName = DOM_EVENT_NAME[handler.eventName];
    if (!domName) continue;
    el.addEventListener(domName, (ev: Event) => {
      const gesture = {
        value: (ev.target as HTMLInputElement | null)?.value,
        keyCode: (ev as KeyboardEvent).keyCode,
      };
      const record = eventRecordFor(handler, node.nodeId, gesture);
      if (record) post(record); // at most one posted event per gesture
    });
  }
  state.nodes.set(node.nodeId, el);
  for (const child of node.children) {
    el.appendChild(buildNode(doc, child, state, post));
  }
  return el;
}

/**
 * Full re-render of a snapshot into `root`. A malformed snapshot shows an
 * error banner and keeps the last good render.
 */
export function render(snapshot: unknown, root: Element, state: ClientState, post: PostEvent): ClientState {
  const doc = root.ownerDocument;
  const banner = doc.getElementById("mvu-banner");
  const err = validateSnapshot(snapshot);
  if (err) {
    state.status = "error";
    state.lastError = err;
    if (banner) {
      banner.textContent = `bad snapshot: ${err}`;
      (banner as HTMLElement).style.display = "block";
    }
    return state;
  }
  const snap = snapshot as Snapshot;
  state.nodes = new Map();
  const fresh = doc.createDocumentFragment();
  for (const node of snap.tree) {
    fresh.appendChild(buildNode(doc, node, state, post));
  }
  root.replaceChildren(fresh);
  state.revision = snap.revision;
  state.status = "live";
  state.lastError = null;
  if (banner) (banner as HTMLElement).style.display = "none";
  return state;
}

export function findTag(snapshot: Snapshot, tagName: string): TagNode | null {
  const walk = (nodes: SnapshotNode[]): TagNode | null => {
    for (const n of nodes) {
      if (n.kind === "tag") {
        if (n.tagName === tagName) return n;
        const inner = walk(n.children);
        if (inner) return inner;
      }
    }
    return null;
  };
  return walk(snapshot.tree);
}
