// Wire types for the bridge: page snapshots in, user events out.
// Payload literals mirror the trace-file grammar: null is unit, numbers and
// strings are themselves, a two-element array is a pair.

export type PayloadLiteral = null | number | string | [PayloadLiteral, PayloadLiteral];

export interface HandlerInfo {
  eventName: string;
  payloadType: string;
}

export interface TagNode {
  kind: "tag";
  nodeId: number;
  tagName: string;
  attributes: { key: string; value: string }[];
  handlers: HandlerInfo[];
  children: SnapshotNode[];
}

export interface TextNode {
  kind: "text";
  text: string;
}

export type SnapshotNode = TagNode | TextNode;

export interface Snapshot {
  revision: number;
  tree: SnapshotNode[];
}

export interface EventRecord {
  target: number | "env";
  event: string;
  payload: PayloadLiteral;
}

/** Structural validation; returns an error description or null when fine. */
export function validateSnapshot(value: unknown): string | null {
  if (typeof value !== "object" || value === null) return "snapshot is not an object";
  const snap = value as Record<string, unknown>;
  if (typeof snap.revision !== "number") return "missing revision";
  if (!Array.isArray(snap.tree)) return "missing tree";
  for (const node of snap.tree) {
    const err = validateNode(node);
    if (err) return err;
  }
  return null;
}

function validateNode(node: unknown): string | null {
  if (typeof node !== "object" || node === null) return "node is not an object";
  const n = node as Record<string, unknown>;
  if (n.kind === "text") {
    return typeof n.text === "string" ? null : "text node without text";
  }
  if (n.kind !== "tag") return `unknown node kind ${String(n.kind)}`;
  if (typeof n.nodeId !== "number") return "tag node without nodeId";
  if (typeof n.tagName !== "string" || n.tagName.length === 0) return "tag node without tagName";
  if (!Array.isArray(n.attributes) || !Array.isArray(n.handlers) || !Array.isArray(n.children)) {
    return "tag node missing attributes/handlers/children";
  }
  for (const h of n.handlers as Record<string, unknown>[]) {
    if (typeof h.eventName !== "string") return "handler without eventName";
  }
  for (const child of n.children) {
    const err = validateNode(child);
    if (err) return err;
  }
  return null;
}

/** What a DOM gesture looks like to the payload extractor. */
export interface GestureInfo {
  value?: string;   // current contents of an input field
  keyCode?: number; // code of the key that moved
}

/**
 * The payload each registered event carries: click sends the unit value,
 * input sends the field's new text, key events send the key code.
 * Returns undefined for gestures that cannot produce the required payload.
 */
export function extractPayload(eventName: string, gesture: GestureInfo): PayloadLiteral | undefined {
  switch (eventName) {
    case "click":
      return null;
    case "input":
      return typeof gesture.value === "string" ? gesture.value : undefined;
    case "keyUp":
    case "keyDown":
      return typeof gesture.keyCode === "number" ? gesture.keyCode : undefined;
    default:
      return undefined;
  }
}

/** One gesture, one posted event. */
export function eventRecordFor(
  handler: HandlerInfo,
  nodeId: number,
  gesture: GestureInfo,
): EventRecord | null {
  const payload = extractPayload(handler.eventName, gesture);
  if (payload === undefined) return null;
  return { target: nodeId, event: handler.eventName, payload };
}
