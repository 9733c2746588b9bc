// Article rendering: paragraphs in reading order, each slot's image directly
// beneath its paragraph. Produces an intermediate block list plus an HTML
// string so rendering is testable without a browser; the DOM layer mounts
// the HTML and wires image-error fallbacks.

import { ArticlePayload, ParagraphPayload, ScoreItem } from './types.js';

export type Block =
  | { kind: 'paragraph'; index: number; text: string }
  | { kind: 'image'; imageId: string; uri: string };

export const PLACEHOLDER_URI =
  'data:image/svg+xml,' +
  encodeURIComponent(
    '<svg xmlns="http://www.w3.org/2000/svg" width="320" height="180">' +
      '<rect width="100%" height="100%" fill="#eee"/>' +
      '<text x="50%" y="50%" text-anchor="middle" fill="#888">image unavailable</text></svg>',
  );

export function articleBlocks(
  article: ArticlePayload,
  imageUris: Record<string, string>,
): Block[] {
  const slotByParagraph = new Map(
    article.slots
      .filter((s) => s.selected !== null)
      .map((s) => [s.paragraph_index, s.selected as string]),
  );
  const blocks: Block[] = [];
  for (const paragraph of article.paragraphs) {
    blocks.push({ kind: 'paragraph', index: paragraph.index, text: paragraph.text });
    const imageId = slotByParagraph.get(paragraph.index);
    if (imageId !== undefined) {
      blocks.push({ kind: 'image', imageId, uri: imageUris[imageId] ?? '' });
    }
  }
  return blocks;
}

export function escapeHtml(raw: string): string {
  return raw
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

export function blocksToHtml(blocks: Block[]): string {
  const parts: string[] = [];
  for (const block of blocks) {
    if (block.kind === 'paragraph') {
      parts.push(`<p class="para" data-index="${block.index}">${escapeHtml(block.text)}</p>`);
    } else {
      // onerror swap keeps a broken URI from blocking the rater.
      parts.push(
        `<figure class="slot"><img src="${escapeHtml(block.uri)}" alt="article image" ` +
          `onerror="this.src='${PLACEHOLDER_URI}';this.dataset.failed='1'"/></figure>`,
      );
    }
  }
  return parts.join('\n');
}

export function renderScoreItem(item: ScoreItem): string {
  const instruction = `<section class="instruction"><h2>Writing instruction</h2>` +
    `<p>${escapeHtml(item.instruction)}</p></section>`;
  const body = blocksToHtml(articleBlocks(item.article, item.image_uris));
  return `${instruction}\n<article class="rendered">${body}</article>`;
}

export function renderPrefix(prefix: ParagraphPayload[]): string {
  return prefix
    .map((p) => `<p class="para" data-index="${p.index}">${escapeHtml(p.text)}</p>`)
    .join('\n');
}
