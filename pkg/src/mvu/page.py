"""Runtime DOM pages: trees with per-node event queues, erase and diff.

`diff` matches nodes positionally after flattening appends/empties at each
level. A matched pair with equal tag names keeps the old node's queue and
node id (attributes are replaced by the new ones, children diffed
recursively); any mismatch deletes the old node and inserts the new one with
an empty queue; text always takes the new text. The rebuilt page mirrors the
new HTML value's exact append structure, so erase(diff(h, d)) == h.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import syntax as S
from .registry import BY_EVENT, handler_for
from .syntax import Term


@dataclass(frozen=True)
class Event:
    name: str
    payload: Term


class Page:
    __slots__ = ()


class PageTag(Page):
    __slots__ = ("tag", "attrs", "kids", "queue", "node_id")

    def __init__(self, tag: str, attrs: Term, kids: Page, queue: tuple, node_id: int):
        self.tag = tag
        self.attrs = attrs
        self.kids = kids
        self.queue = queue
        self.node_id = node_id

    def __eq__(self, other):
        return (
            isinstance(other, PageTag)
            and self.tag == other.tag
            and self.node_id == other.node_id
            and self.queue == other.queue
            and self.attrs == other.attrs
            and self.kids == other.kids
        )

    def __hash__(self):
        return hash((self.tag, self.node_id))


class PageText(Page):
    __slots__ = ("text",)

    def __init__(self, text: Term):
        self.text = text

    def __eq__(self, other):
        return isinstance(other, PageText) and self.text == other.text

    def __hash__(self):
        return hash("PageText")


class PageEmpty(Page):
    __slots__ = ()

    def __eq__(self, other):
        return isinstance(other, PageEmpty)

    def __hash__(self):
        return hash("PageEmpty")


class PageAppend(Page):
    __slots__ = ("left", "right")

    def __init__(self, left: Page, right: Page):
        self.left = left
        self.right = right

    def __eq__(self, other):
        return isinstance(other, PageAppend) and self.left == other.left and self.right == other.right

    def __hash__(self):
        return hash("PageAppend")


PAGE_EMPTY = PageEmpty()


def erase(d: Page) -> Term:
    """Drop event queues and node ids, recovering the HTML value."""
    cls = type(d)
    if cls is PageTag:
        return S.HtmlTag(d.tag, d.attrs, erase(d.kids))
    if cls is PageText:
        return S.HtmlText(d.text)
    if cls is PageEmpty:
        return S.HTML_EMPTY
    if cls is PageAppend:
        return S.Append(erase(d.left), erase(d.right))
    raise TypeError(d)


def _flatten_html(v: Term, out: list) -> None:
    cls = type(v)
    if cls is S.Append:
        _flatten_html(v.left, out)
        _flatten_html(v.right, out)
    elif cls is S.HtmlEmpty:
        pass
    else:
        out.append(v)


def _flatten_page(d: Page, out: list) -> None:
    cls = type(d)
    if cls is PageAppend:
        _flatten_page(d.left, out)
        _flatten_page(d.right, out)
    elif cls is PageEmpty:
        pass
    else:
        out.append(d)


def page_nodes(d: Page):
    """All tag nodes in document order."""
    stack = [d]
    while stack:
        node = stack.pop()
        cls = type(node)
        if cls is PageAppend:
            stack.append(node.right)
            stack.append(node.left)
        elif cls is PageTag:
            yield node
            stack.append(node.kids)


def find_node(d: Page, node_id: int) -> PageTag | None:
    for node in page_nodes(d):
        if node.node_id == node_id:
            return node
    return None


class NodeIdSupply:
    """Wraps the configuration's name supply counter for node insertion."""

    def __init__(self, start: int):
        self.next_id = start

    def take(self) -> int:
        out = self.next_id
        self.next_id += 1
        return out


def build_page(html: Term, supply: NodeIdSupply) -> Page:
    """A fresh page for an HTML value: empty queues, fresh node ids."""
    cls = type(html)
    if cls is S.HtmlTag:
        node_id = supply.take()
        return PageTag(html.tag, html.attrs, build_page(html.kids, supply), (), node_id)
    if cls is S.HtmlText:
        return PageText(html.text)
    if cls is S.HtmlEmpty:
        return PAGE_EMPTY
    if cls is S.Append:
        return PageAppend(build_page(html.left, supply), build_page(html.right, supply))
    raise TypeError(f"not an HTML value: {html!r}")


def diff(new_html: Term, old_page: Page, supply: NodeIdSupply) -> Page:
    old_items: list = []
    _flatten_page(old_page, old_items)
    cursor = [0]
    return _diff_walk(new_html, old_items, cursor, supply)


def _diff_walk(html: Term, old_items: list, cursor: list, supply: NodeIdSupply) -> Page:
    cls = type(html)
    if cls is S.Append:
        left = _diff_walk(html.left, old_items, cursor, supply)
        right = _diff_walk(html.right, old_items, cursor, supply)
        return PageAppend(left, right)
    if cls is S.HtmlEmpty:
        return PAGE_EMPTY
    if cls is S.HtmlTag:
        old = old_items[cursor[0]] if cursor[0] < len(old_items) else None
        cursor[0] += 1
        if isinstance(old, PageTag) and old.tag == html.tag:
            kids = diff(html.kids, old.kids, supply)
            return PageTag(html.tag, html.attrs, kids, old.queue, old.node_id)
        return build_page(html, supply)
    if cls is S.HtmlText:
        cursor[0] += 1  # consume the positional slot; text always takes the new text
        return PageText(html.text)
    raise TypeError(f"not an HTML value: {html!r}")


# ---------------------------------------------------------------------------
# Handler collection (works over attribute values and subscription values)
# ---------------------------------------------------------------------------


def handlers(event_name: str, value: Term) -> list:
    """Left-to-right handler functions registered for `event_name`."""
    handler = handler_for(event_name) if event_name in BY_EVENT else None
    out: list = []
    _collect_handlers(handler, value, out)
    return out


def _collect_handlers(handler: str | None, value: Term, out: list) -> None:
    cls = type(value)
    if cls is S.Append:
        _collect_handlers(handler, value.left, out)
        _collect_handlers(handler, value.right, out)
    elif cls is S.AttrTerm:
        if handler is not None and value.key == handler:
            out.append(value.body)
    elif cls is S.SubTerm:
        if handler is not None and value.handler == handler:
            out.append(value.body)
    # attrEmpty / subEmpty / plain values contribute nothing


def procs(cmd: Term) -> list:
    """Terms spawned by a command value, left to right."""
    out: list = []
    _collect_procs(cmd, out)
    return out


def _collect_procs(cmd: Term, out: list) -> None:
    cls = type(cmd)
    if cls is S.Append:
        _collect_procs(cmd.left, out)
        _collect_procs(cmd.right, out)
    elif cls is S.CmdSpawn:
        out.append(cmd.body)
    elif cls is not S.CmdEmpty:
        raise TypeError(f"not a command value: {cmd!r}")
