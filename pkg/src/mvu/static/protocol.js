// Wire types for the bridge: page snapshots in, user events out.
// Payload literals mirror the trace-file grammar: null is unit, numbers and
// strings are themselves, a two-element array is a pair.
/** Structural validation; returns an error description or null when fine. */
export function validateSnapshot(value) {
    if (typeof value !== "object" || value === null)
        return "snapshot is not an object";
    const snap = value;
    if (typeof snap.revision !== "number")
        return "missing revision";
    if (!Array.isArray(snap.tree))
        return "missing tree";
    for (const node of snap.tree) {
        const err = validateNode(node);
        if (err)
            return err;
    }
    return null;
}
function validateNode(node) {
    if (typeof node !== "object" || node === null)
        return "node is not an object";
    const n = node;
    if (n.kind === "text") {
        return typeof n.text === "string" ? null : "text node without text";
    }
    if (n.kind !== "tag")
        return `unknown node kind ${String(n.kind)}`;
    if (typeof n.nodeId !== "number")
        return "tag node without nodeId";
    if (typeof n.tagName !== "string" || n.tagName.length === 0)
        return "tag node without tagName";
    if (!Array.isArray(n.attributes) || !Array.isArray(n.handlers) || !Array.isArray(n.children)) {
        return "tag node missing attributes/handlers/children";
    }
    for (const h of n.handlers) {
        if (typeof h.eventName !== "string")
            return "handler without eventName";
    }
    for (const child of n.children) {
        const err = validateNode(child);
        if (err)
            return err;
    }
    return null;
}
/**
 * The payload each registered event carries: click sends the unit value,
 * input sends the field's new text, key events send the key code.
 * Returns undefined for gestures that cannot produce the required payload.
 */
export function extractPayload(eventName, gesture) {
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
export function eventRecordFor(handler, nodeId, gesture) {
    const payload = extractPayload(handler.eventName, gesture);
    if (payload === undefined)
        return null;
    return { target: nodeId, event: handler.eventName, payload };
}
